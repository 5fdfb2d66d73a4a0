"""End-effector forward kinematics and closed-form inverse kinematics.

Chain geometry (body frame: z up, CM at origin):

* base link hangs a distance ``L0`` straight down the body z axis;
* joint 1 turns about the body x axis; link 1 (length ``L1``) lies along
  body -y when ``theta1 = 0``;
* joint 2 axis is the link-1 frame z axis; link 2 (length ``L2``) lies along
  the end-effector x axis and reaches the gripper.

At ``phi = theta = 0`` the gripper rotation is ``Rz(psi) Rx(theta1) Rz(theta2) Rz(-pi/2)``,
which is the closed-form orientation block the inverse solver inverts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonUnitRotation, UnreachableOrientation
from .spatial import (
    EulerAngles,
    HomogeneousTransform,
    body_to_inertial,
    orthonormality_error,
    rot_x,
    rot_z,
    rotation_to_euler,
)

CASE_TOL = 1e-9
UNIT_TOL = 1e-6

_R_HOME = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class LinkLengths:
    L0: float = 30e-3
    L1: float = 70e-3
    L2: float = 85e-3

    def __post_init__(self):
        for name in ("L0", "L1", "L2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class JointAngles:
    theta1: float = 0.0
    theta2: float = 0.0


@dataclass(frozen=True)
class VehicleConfig:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    psi: float = 0.0


@dataclass(frozen=True)
class EndEffectorPose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def rotation(self) -> np.ndarray:
        """Gripper-to-inertial rotation matrix."""
        return body_to_inertial(EulerAngles.from_array(self.orientation))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])


class Branch(enum.Enum):
    ElbowA = "ElbowA"
    ElbowB = "ElbowB"
    Degenerate = "Degenerate"


class Multiplicity(enum.Enum):
    Two = "Two"
    Infinite = "Infinite"


@dataclass(frozen=True)
class IkSolution:
    vehicle: VehicleConfig
    joints: JointAngles
    branch: Branch
    multiplicity: Multiplicity
    case: int


def chain_transforms(lengths: LinkLengths, joints: JointAngles):
    """``(A_0^B, A_1^0, A_2^1)`` for the manipulator."""
    a0 = HomogeneousTransform.translate(0.0, 0.0, -lengths.L0)
    a1 = HomogeneousTransform.rotate(rot_x(joints.theta1)) @ HomogeneousTransform.translate(
        0.0, -lengths.L1, 0.0
    )
    a2 = HomogeneousTransform.rotate(rot_z(joints.theta2) @ _R_HOME) @ HomogeneousTransform.translate(
        lengths.L2, 0.0, 0.0
    )
    return a0, a1, a2


def end_effector_transform(
    vehicle: VehicleConfig,
    attitude: EulerAngles,
    joints: JointAngles,
    lengths: LinkLengths,
) -> HomogeneousTransform:
    angles = EulerAngles(attitude.phi, attitude.theta, vehicle.psi)
    base = HomogeneousTransform(body_to_inertial(angles), np.array([vehicle.x, vehicle.y, vehicle.z], float))
    a0, a1, a2 = chain_transforms(lengths, joints)
    return base @ a0 @ a1 @ a2


def forward_kinematics(
    vehicle: VehicleConfig,
    attitude: EulerAngles,
    joints: JointAngles,
    lengths: LinkLengths,
) -> EndEffectorPose:
    """Gripper pose in the inertial frame.

    ``attitude.psi`` is ignored in favour of ``vehicle.psi``; roll and pitch may
    be arbitrary.
    """
    t = end_effector_transform(vehicle, attitude, joints, lengths)
    return EndEffectorPose(t.translation.copy(), rotation_to_euler(t.rotation).as_array())


def reset_rotation(psi: float, theta1: float, theta2: float) -> np.ndarray:
    """Gripper orientation for a level vehicle (``phi = theta = 0``)."""
    cp, sp = math.cos(psi), math.sin(psi)
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    return np.array(
        [
            [cp * s2 + c1 * c2 * sp, cp * c2 - c1 * sp * s2, sp * s1],
            [sp * s2 - cp * c1 * c2, c2 * sp + cp * c1 * s2, -cp * s1],
            [-c2 * s1, s1 * s2, c1],
        ]
    )


def _vehicle_position(p, psi: float, theta1: float, theta2: float, lengths: LinkLengths) -> VehicleConfig:
    cp, sp = math.cos(psi), math.sin(psi)
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    L0, L1, L2 = lengths.L0, lengths.L1, lengths.L2
    x = p[0] - (L1 * c1 * sp + L2 * cp * s2 + L2 * c1 * c2 * sp)
    y = p[1] - (-L1 * cp * c1 + L2 * sp * s2 - L2 * cp * c1 * c2)
    z = p[2] - (-L0 - L1 * s1 - L2 * c2 * s1)
    return VehicleConfig(float(x), float(y), float(z), float(psi))


def classify_case(r: np.ndarray) -> int:
    if max(abs(r[0, 2]), abs(r[1, 2])) >= CASE_TOL:
        return 1
    return 2 if r[2, 2] > 0 else 3


def inverse_kinematics(target, lengths: LinkLengths) -> list[IkSolution]:
    """All closed-form solutions placing the gripper at ``target``.

    ``target`` is an :class:`EndEffectorPose` or a :class:`HomogeneousTransform`
    (gripper-to-inertial).  The vehicle is assumed level (``phi = theta = 0``).
    Case 1 yields two solutions (``sin theta1`` positive first); Cases 2 and 3
    yield one representative with ``psi = 0`` and ``Multiplicity.Infinite``.
    """
    if isinstance(target, HomogeneousTransform):
        r, p = np.asarray(target.rotation, float), np.asarray(target.translation, float)
    else:
        r, p = target.rotation(), np.asarray(target.position, float)

    err = orthonormality_error(r)
    if err > UNIT_TOL or abs(np.linalg.det(r) - 1.0) > UNIT_TOL:
        raise NonUnitRotation(f"target rotation not orthonormal (error {err:.3g} > {UNIT_TOL:g})")

    case = classify_case(r)
    if case == 1:
        s = math.sqrt(max(0.0, 1.0 - r[2, 2] ** 2))
        raw = [
            (math.atan2(r[0, 2], -r[1, 2]), math.atan2(s, r[2, 2]), math.atan2(r[2, 1], -r[2, 0]), Branch.ElbowA),
            (math.atan2(-r[0, 2], r[1, 2]), math.atan2(-s, r[2, 2]), math.atan2(-r[2, 1], r[2, 0]), Branch.ElbowB),
        ]
        mult = Multiplicity.Two
    else:
        theta1 = 0.0 if case == 2 else math.pi
        raw = [(0.0, theta1, math.atan2(r[0, 0], r[0, 1]), Branch.Degenerate)]
        mult = Multiplicity.Infinite

    out = []
    for psi, t1, t2, branch in raw:
        resid = float(np.max(np.abs(reset_rotation(psi, t1, t2) - r)))
        if resid > UNIT_TOL:
            raise UnreachableOrientation(
                f"case {case} reconstruction residual {resid:.3g} exceeds {UNIT_TOL:g}"
            )
        out.append(
            IkSolution(_vehicle_position(p, psi, t1, t2, lengths), JointAngles(t1, t2), branch, mult, case)
        )
    return out


def _stack_rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _stack_ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _stack_rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def forward_kinematics_batch(q, lengths: LinkLengths) -> np.ndarray:
    """Gripper poses ``[x, y, z, phi, theta, psi]`` for rows ``q = [X, Y, Z, phi, theta, psi, t1, t2]``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    rb = _stack_rz(q[:, 5]) @ _stack_ry(q[:, 4]) @ _stack_rx(q[:, 3])
    r1 = rb @ _stack_rx(q[:, 6])
    r2 = r1 @ _stack_rz(q[:, 7]) @ _R_HOME
    pos = (
        q[:, :3]
        - lengths.L0 * rb[:, :, 2]
        - lengths.L1 * r1[:, :, 1]
        + lengths.L2 * r2[:, :, 0]
    )
    out = np.empty((q.shape[0], 6))
    out[:, :3] = pos
    for i in range(q.shape[0]):
        out[i, 3:] = rotation_to_euler(r2[i]).as_array()
    return out
