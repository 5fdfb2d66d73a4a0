"""Quadrotor carrying a two-link manipulator: kinematics, coupled dynamics,
RIC control, trajectory planning, rotor identification and simulation."""

from .control import Controller, RicAxisGains, RicAxisState, default_gains, mixer_solve, ric_axis_step
from .dynamics import (
    ControlCommand,
    InteractionWrench,
    PayloadSpec,
    RotorSpeeds,
    SystemParams,
    SystemState,
    forward_dynamics,
    inverse_dynamics,
    mass_matrix,
    rotor_forces,
)
from .errors import *  # noqa: F401,F403
from .kinematics import EndEffectorPose, JointAngles, LinkLengths, VehicleConfig, forward_kinematics, inverse_kinematics
from .simengine import Scenario, load_scenario, run_scenario
from .spatial import EulerAngles, HomogeneousTransform

__version__ = "0.1.0"
