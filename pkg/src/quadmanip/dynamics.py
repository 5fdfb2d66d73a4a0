"""Rotor model and coupled quadrotor/manipulator equations of motion.

The arm is modelled as three uniform slender rods (base link fixed to the
vehicle, link 1, link 2) with an optional point-mass payload at the gripper.
Inverse dynamics is a recursive Newton-Euler pass with the vehicle as moving
base; forward dynamics assembles the mass matrix from unit-acceleration
probes of that pass and solves for the accelerations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rigid
from .errors import SingularMassMatrix
from .kinematics import LinkLengths
from .spatial import EulerAngles, body_to_inertial

G = 9.81
OMEGA_MAX = 1200.0
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters; defaults are the identified prototype values.

    ``joint_armature`` is the reflected actuator inertia at each arm joint
    (kg m^2).  It only adds ``J * theta_ddot`` to the joint equations.
    """

    m: float = 1.0
    d: float = 223.5e-3
    Ix: float = 13.215e-3
    Iy: float = 12.522e-3
    Iz: float = 23.527e-3
    Ir: float = 33.216e-6
    m0: float = 30e-3
    m1: float = 55e-3
    m2: float = 112e-3
    L0: float = 30e-3
    L1: float = 70e-3
    L2: float = 85e-3
    kF: tuple[float, float, float, float] = (1.667e-5, 1.285e-5, 1.711e-5, 1.556e-5)
    kM: tuple[float, float, float, float] = (3.965e-7, 2.847e-7, 4.404e-7, 3.170e-7)
    g: float = G
    omega_max: float = OMEGA_MAX
    joint_armature: tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "kF", tuple(float(k) for k in self.kF))
        object.__setattr__(self, "kM", tuple(float(k) for k in self.kM))
        object.__setattr__(self, "joint_armature", tuple(float(k) for k in self.joint_armature))
        if len(self.kF) != 4 or len(self.kM) != 4:
            raise ValueError("kF and kM need four entries")
        for name in ("m", "d", "Ix", "Iy", "Iz", "L0", "L1", "L2", "omega_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        # arm masses may be zero for the decoupled-vehicle limit
        for name in ("Ir", "m0", "m1", "m2", "g"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v!r}")
        if any(not k > 0 for k in self.kF + self.kM):
            raise ValueError("rotor coefficients must be positive")
        if any(k < 0 for k in self.joint_armature):
            raise ValueError("joint_armature must be non-negative")

    @property
    def lengths(self) -> LinkLengths:
        return LinkLengths(self.L0, self.L1, self.L2)

    @property
    def total_mass(self) -> float:
        """Vehicle plus arm links, payload excluded."""
        return self.m + self.m0 + self.m1 + self.m2

    def with_updates(self, **kw) -> "SystemParams":
        return replace(self, **kw)


@dataclass
class SystemState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(8))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(8))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(8).copy()
        self.qdot = np.asarray(self.qdot, dtype=float).reshape(8).copy()

    @property
    def attitude(self) -> EulerAngles:
        return EulerAngles(self.q[3], self.q[4], self.q[5])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])

    @classmethod
    def from_vector(cls, x) -> "SystemState":
        x = np.asarray(x, dtype=float)
        return cls(x[:8], x[8:])


@dataclass(frozen=True)
class RotorSpeeds:
    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(4)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"rotor speeds must be finite and non-negative: {w}")
        object.__setattr__(self, "omega", w)


@dataclass(frozen=True)
class ControlCommand:
    T: float = 0.0
    tau_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau_m: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.T], np.asarray(self.tau_a, float), np.asarray(self.tau_m, float)])


@dataclass(frozen=True)
class InteractionWrench:
    """Force in the inertial frame and moment (about the vehicle CM) in the body frame."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.force, float), np.asarray(self.moment, float)])


@dataclass(frozen=True)
class PayloadSpec:
    mass: float = 0.0
    attached: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass >= 0):
            raise ValueError(f"payload mass must be >= 0, got {self.mass!r}")


@dataclass(frozen=True)
class Link2Properties:
    mass: float
    com_offset: float  # from joint 2 along the link (m)
    inertia_cm: float  # perpendicular inertia about the composite CM (kg m^2)

    @property
    def inertia_joint(self) -> float:
        return self.inertia_cm + self.mass * self.com_offset**2


def rotor_forces(speeds: RotorSpeeds, params: SystemParams):
    """Total thrust, body moments and the signed rotor-speed sum ``omega_bar``."""
    w2 = np.asarray(speeds.omega, dtype=float) ** 2
    f = np.asarray(params.kF) * w2
    mo = np.asarray(params.kM) * w2
    thrust = float(f.sum())
    tau = np.array([params.d * (f[3] - f[1]), params.d * (f[2] - f[0]), -mo[0] + mo[1] - mo[2] + mo[3]])
    w = speeds.omega
    omega_bar = float(w[0] - w[1] + w[2] - w[3])
    return thrust, tau, omega_bar


def effective_link2(params: SystemParams, payload: PayloadSpec) -> Link2Properties:
    m2, l2 = params.m2, params.L2
    rod_cm = m2 * l2 * l2 / 12.0
    if not payload.attached or payload.mass == 0.0:
        return Link2Properties(m2, 0.5 * l2, rod_cm)
    mp = payload.mass
    mt = m2 + mp
    c = (m2 * 0.5 * l2 + mp * l2) / mt
    inertia = rod_cm + m2 * (0.5 * l2 - c) ** 2 + mp * (l2 - c) ** 2
    return Link2Properties(mt, c, inertia)


def pack_params(params: SystemParams, payload: PayloadSpec | None = None) -> np.ndarray:
    link2 = effective_link2(params, payload or PayloadSpec())
    p = np.zeros(_rigid.N_PARAMS)
    p[_rigid.P_M] = params.m
    p[_rigid.P_D] = params.d
    p[_rigid.P_IX] = params.Ix
    p[_rigid.P_IY] = params.Iy
    p[_rigid.P_IZ] = params.Iz
    p[_rigid.P_IR] = params.Ir
    p[_rigid.P_M0] = params.m0
    p[_rigid.P_M1] = params.m1
    p[_rigid.P_M2] = link2.mass
    p[_rigid.P_L0] = params.L0
    p[_rigid.P_L1] = params.L1
    p[_rigid.P_L2] = params.L2
    p[_rigid.P_G] = params.g
    p[_rigid.P_JA1], p[_rigid.P_JA2] = params.joint_armature
    p[_rigid.P_C2] = link2.com_offset
    p[_rigid.P_I2] = link2.inertia_cm
    return p


def inverse_dynamics(
    state: SystemState,
    qddot,
    params: SystemParams,
    payload: PayloadSpec | None = None,
    omega_bar: float = 0.0,
):
    """Generalized forces producing ``qddot`` and the arm-on-vehicle wrench.

    The first three generalized forces are the inertial-frame force required
    at the vehicle CM, the next three are ``J_v^T`` times the required body
    moment, and the last two are joint torques.
    """
    p = pack_params(params, payload)
    qf, f_int, m_int = _rigid.rnea(state.q, state.qdot, np.asarray(qddot, float), p, float(omega_bar))
    return qf, InteractionWrench(f_int, m_int)


def mass_matrix(state: SystemState, params: SystemParams, payload: PayloadSpec | None = None):
    """``(M, bias)`` in generalized coordinates."""
    p = pack_params(params, payload)
    return _rigid.mass_and_bias(state.q, state.qdot, p, 0.0, 8)


def generalized_input(state: SystemState, cmd: ControlCommand, disturbance: InteractionWrench | None = None):
    dist = np.zeros(6) if disturbance is None else disturbance.vector()
    return _rigid.input_forces(state.q, cmd.vector(), dist)


def forward_dynamics(
    state: SystemState,
    cmd: ControlCommand,
    speeds: RotorSpeeds | None,
    params: SystemParams,
    payload: PayloadSpec | None = None,
    disturbance: InteractionWrench | None = None,
    lock_joints: bool = False,
) -> np.ndarray:
    """Generalized accelerations under thrust/moment/joint-torque command ``cmd``.

    ``speeds`` only contributes the rotor gyroscopic coupling; ``cmd`` carries
    the thrust and moments.  With ``lock_joints`` the joint accelerations are
    held at zero and only the six vehicle equations are solved.
    """
    omega_bar = 0.0 if speeds is None else rotor_forces(speeds, params)[2]
    p = pack_params(params, payload)
    n = 6 if lock_joints else 8
    mm, bias = _rigid.mass_and_bias(state.q, state.qdot, p, omega_bar, n)
    cond = np.linalg.cond(mm)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMassMatrix(f"mass matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    dist = np.zeros(6) if disturbance is None else disturbance.vector()
    rhs = _rigid.input_forces(state.q, cmd.vector(), dist) - bias
    qdd = np.zeros(8)
    qdd[:n] = np.linalg.solve(mm, rhs[:n])
    return qdd


def energies(state: SystemState, params: SystemParams, payload: PayloadSpec | None = None):
    """``(kinetic, potential)`` energy of the whole system."""
    return _rigid.energies(state.q, state.qdot, pack_params(params, payload))


def reduced_quadrotor_eom(
    pose,
    rates,
    thrust: float,
    tau_a,
    omega_bar: float,
    wrench: InteractionWrench,
    params: SystemParams,
) -> np.ndarray:
    """Small-angle vehicle equations with the arm entering only as a wrench.

    ``pose = [X, Y, Z, phi, theta, psi]`` and ``rates`` holds the matching
    first derivatives.  Returns the six second derivatives.  The roll equation
    uses the rigid-body gyroscopic product ``theta_dot * psi_dot``.
    """
    _, _, _, phi, theta, psi = (float(v) for v in pose)
    dphi, dtheta, dpsi = float(rates[3]), float(rates[4]), float(rates[5])
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    m, ix, iy, iz, ir = params.m, params.Ix, params.Iy, params.Iz, params.Ir
    f, mo = np.asarray(wrench.force, float), np.asarray(wrench.moment, float)
    t1, t2, t3 = (float(v) for v in tau_a)
    return np.array(
        [
            (thrust * (cp * st * cf + sp * sf) + f[0]) / m,
            (thrust * (sp * st * cf - cp * sf) + f[1]) / m,
            (-m * params.g + thrust * ct * cf + f[2]) / m,
            (dtheta * dpsi * (iy - iz) - ir * dtheta * omega_bar + t1 + mo[0]) / ix,
            (dpsi * dphi * (iz - ix) + ir * dphi * omega_bar + t2 + mo[1]) / iy,
            (dtheta * dphi * (ix - iy) + t3 + mo[2]) / iz,
        ]
    )


def thrust_direction(angles: EulerAngles) -> np.ndarray:
    return body_to_inertial(angles)[:, 2]
