"""Robust internal-loop compensator (RIC) control stack and rotor mixer.

Each controlled coordinate runs the same two-loop law:

* external PD on the tracking error produces ``u_c``;
* a nominal double integrator ``tau_c * y_m'' = u_c`` predicts the response;
* an internal PID on ``y_m - y`` produces ``u_k``;
* the applied effort is ``u = u_c + u_k + u_ex``.

X and Y efforts are horizontal forces expressed in the yaw-aligned frame and
are turned into pitch/roll setpoints by dividing by the nominal weight.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _loop
from .dynamics import ControlCommand, RotorSpeeds, SystemParams, SystemState
from .errors import InfeasibleCommand, SingularMixer

log = logging.getLogger(__name__)

AXES = ("X", "Y", "Z", "phi", "theta", "psi", "theta1", "theta2")
TILT_LIMIT = math.radians(20.0)
INTEGRAL_LIMIT = 10.0


@dataclass(frozen=True)
class RicAxisGains:
    kp_ext: float
    kd_ext: float
    kp_int: float
    kd_int: float
    ki_int: float
    tau_c: float
    integral_limit: float = INTEGRAL_LIMIT

    def __post_init__(self):
        if not self.tau_c > 0:
            raise ValueError(f"tau_c must be positive, got {self.tau_c!r}")
        for name in ("kp_ext", "kd_ext", "kp_int", "kd_int", "ki_int", "integral_limit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.kp_ext, self.kd_ext, self.kp_int, self.kd_int, self.ki_int, self.tau_c, self.integral_limit]
        )


def default_gains() -> dict[str, RicAxisGains]:
    """Per-axis gains of the tuned prototype controller."""
    table = {
        #          kp    kd   kp_i   kd_i  ki_i  tau
        "X": (0.3, 0.7, 0.001, 0.001, 0.0, 1.0),
        "Y": (0.3, 0.7, 0.001, 0.001, 0.0, 1.0),
        "Z": (5.0, 3.0, 5.0, 3.0, 1.0, 1.0),
        "phi": (30.0, 5.0, 30.0, 5.0, 10.0, 0.01),
        "theta": (30.0, 5.0, 30.0, 5.0, 10.0, 0.01),
        "psi": (5.0, 3.0, 5.0, 3.0, 1.0, 0.02),
        "theta1": (5.0, 3.0, 5.0, 3.0, 1.0, 0.1),
        "theta2": (5.0, 3.0, 5.0, 3.0, 1.0, 0.1),
    }
    return {k: RicAxisGains(*v) for k, v in table.items()}


@dataclass(frozen=True)
class RicAxisState:
    """Reference-model output/rate, internal-loop integral, and the last model input.

    ``primed`` is False until the first step latches the model onto the
    measurement.
    """

    ym: float = 0.0
    ym_dot: float = 0.0
    integ: float = 0.0
    u_prev: float = 0.0
    primed: bool = False

    def reset(self) -> "RicAxisState":
        return RicAxisState()

    def as_array(self) -> np.ndarray:
        return np.array([self.ym, self.ym_dot, self.integ, self.u_prev, float(self.primed)])

    @classmethod
    def from_array(cls, a) -> "RicAxisState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), bool(a[4]))


def ric_axis_step(
    gains: RicAxisGains,
    st: RicAxisState,
    y_ref: float,
    y_ref_rate: float,
    y: float,
    y_rate: float,
    u_ex: float,
    dt: float,
) -> tuple[float, RicAxisState]:
    """One controller period for a single axis; returns ``(u, new_state)``.

    The nominal model is advanced with the trapezoidal rule on its input
    (exact for piecewise-linear input), so trajectories converge at second
    order in ``dt``.  The first call only latches the model onto ``y``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = st.as_array()
    u = _loop.ric_axis(gains.as_array(), s, float(y_ref), float(y_ref_rate), float(y), float(y_rate), float(u_ex), float(dt))
    return float(u), RicAxisState.from_array(s)


def xy_error_to_body(ex_inertial: float, ey_inertial: float, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return ex_inertial * c + ey_inertial * s, ex_inertial * s - ey_inertial * c


@dataclass(frozen=True)
class Setpoint:
    """Desired ``[X, Y, Z, psi, theta1, theta2]`` and their rates."""

    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))


@dataclass(frozen=True)
class ControllerOutputs:
    cmd: ControlCommand
    phi_des: float
    theta_des: float


class Controller:
    """Eight RIC axes wired as a cascade: X/Y loops feed the roll/pitch loops."""

    def __init__(
        self,
        params: SystemParams,
        gains: dict[str, RicAxisGains] | None = None,
        tilt_limit: float = TILT_LIMIT,
    ):
        self.params = params
        self.gains = dict(default_gains())
        if gains:
            unknown = set(gains) - set(AXES)
            if unknown:
                raise ValueError(f"unknown axes {sorted(unknown)}")
            self.gains.update(gains)
        self.tilt_limit = float(tilt_limit)
        self.weight = params.total_mass * params.g
        self.gain_table = np.array([self.gains[a].as_array() for a in AXES])
        self.state_table = _loop.new_states()

    def reset(self):
        self.state_table[:] = 0.0

    @property
    def states(self) -> dict[str, RicAxisState]:
        return {a: RicAxisState.from_array(r) for a, r in zip(AXES, self.state_table)}

    def step(self, sp: Setpoint, meas: SystemState, dt: float) -> ControllerOutputs:
        if not dt > 0:
            raise ValueError("dt must be positive")
        cmd = np.empty(6)
        phi_des, theta_des = _loop.controller(
            self.gain_table, self.state_table,
            np.asarray(sp.position, float), np.asarray(sp.velocity, float),
            meas.q, meas.qdot, self.weight, self.tilt_limit, float(dt), cmd,
        )
        return ControllerOutputs(
            ControlCommand(float(cmd[0]), cmd[1:4].copy(), cmd[4:6].copy()), float(phi_des), float(theta_des)
        )


def controller_step(
    controller: Controller, setpoint: Setpoint, measured: SystemState, dt: float
) -> ControllerOutputs:
    return controller.step(setpoint, measured, dt)


def mixer_matrix(params: SystemParams) -> np.ndarray:
    """``G`` mapping squared rotor speeds to ``[T, tau_a1, tau_a2, tau_a3]``."""
    kf, km, d = params.kF, params.kM, params.d
    return np.array(
        [
            [kf[0], kf[1], kf[2], kf[3]],
            [0.0, -d * kf[1], 0.0, d * kf[3]],
            [-d * kf[0], 0.0, d * kf[2], 0.0],
            [-km[0], km[1], -km[2], km[3]],
        ]
    )


class Mixer:
    """Caches the inverse of ``G`` for repeated solves."""

    def __init__(self, params: SystemParams):
        self.params = params
        g = mixer_matrix(params)
        if np.linalg.cond(g) > 1e12:
            raise SingularMixer("mixer matrix is numerically singular")
        self._ginv = np.linalg.inv(g)

    def solve(self, wrench, clip: bool = False) -> RotorSpeeds:
        w2 = self._ginv @ np.asarray(wrench, dtype=float)
        if np.any(w2 < -1e-9):
            if not clip:
                raise InfeasibleCommand(f"command needs negative squared speeds: {w2}")
            log.debug("mixer clipped negative squared speeds %s", w2)
        w = np.sqrt(np.maximum(w2, 0.0))
        wmax = self.params.omega_max
        if np.any(w > wmax):
            log.warning("rotor speed saturated at %.0f rad/s: %s", wmax, w)
            w = np.minimum(w, wmax)
        return RotorSpeeds(w)


def mixer_solve(cmd, params: SystemParams, clip: bool = False) -> RotorSpeeds:
    """Rotor speeds realizing ``(T, tau_a1, tau_a2, tau_a3)``.

    Raises InfeasibleCommand when a squared speed would be negative beyond
    ``-1e-9``, unless ``clip`` is set, in which case those rotors are stopped.
    """
    if isinstance(cmd, ControlCommand):
        cmd = [cmd.T, *np.asarray(cmd.tau_a, float)]
    return Mixer(params).solve(cmd, clip=clip)


def with_gains(base: dict[str, RicAxisGains], **axes) -> dict[str, RicAxisGains]:
    out = dict(base)
    for name, kw in axes.items():
        out[name] = replace(out[name], **kw)
    return out
