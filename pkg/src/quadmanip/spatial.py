"""Roll-pitch-yaw rotation algebra and homogeneous transforms.

Conventions
-----------
Euler angles ``(phi, theta, psi)`` are elementary rotations about the fixed
X, Y and Z axes.  :func:`euler_to_rotation` returns the matrix mapping
inertial-frame vectors into the body frame; its transpose maps body vectors
into the inertial frame::

    R_I^B = (Rz(psi) Ry(theta) Rx(phi))^T

Body angular velocity relates to Euler rates by ``omega_b = J_v(angles) @ eta_dot``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GimbalLockError

GIMBAL_LOCK_COS = 1e-6
_REORTHO_TOL = 1e-9


@dataclass(frozen=True)
class EulerAngles:
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi], dtype=float)

    @classmethod
    def from_array(cls, a) -> "EulerAngles":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Twist:
    """Body-frame linear velocity ``v1`` (m/s) and angular velocity ``v2`` (rad/s)."""

    v1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v2: np.ndarray = field(default_factory=lambda: np.zeros(3))


def euler_to_rotation(angles: EulerAngles) -> np.ndarray:
    """Inertial-to-body rotation matrix ``R_I^B`` for roll-pitch-yaw angles."""
    cf, sf = math.cos(angles.phi), math.sin(angles.phi)
    ct, st = math.cos(angles.theta), math.sin(angles.theta)
    cp, sp = math.cos(angles.psi), math.sin(angles.psi)
    return np.array(
        [
            [cp * ct, sp * ct, -st],
            [-sp * cf + cp * st * sf, cp * cf + sp * st * sf, ct * sf],
            [sp * sf + cp * st * cf, -cp * sf + sp * st * cf, ct * cf],
        ]
    )


def body_to_inertial(angles: EulerAngles) -> np.ndarray:
    return euler_to_rotation(angles).T


def euler_rate_jacobian(angles: EulerAngles) -> np.ndarray:
    """``J_v`` such that body rates ``[p, q, r] = J_v @ [phi_dot, theta_dot, psi_dot]``."""
    cf, sf = math.cos(angles.phi), math.sin(angles.phi)
    ct, st = math.cos(angles.theta), math.sin(angles.theta)
    return np.array(
        [
            [1.0, 0.0, -st],
            [0.0, cf, ct * sf],
            [0.0, -sf, ct * cf],
        ]
    )


def euler_rates_from_body_rates(angles: EulerAngles, omega_body) -> np.ndarray:
    if abs(math.cos(angles.theta)) < GIMBAL_LOCK_COS:
        raise GimbalLockError(f"theta={angles.theta!r} too close to +/-pi/2")
    return np.linalg.solve(euler_rate_jacobian(angles), np.asarray(omega_body, float))


def wrap_angle(a):
    """Wrap to (-pi, pi].  Display helper only; dynamics never wrap."""
    w = np.mod(-np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi)
    out = math.pi - w
    return float(out) if np.ndim(out) == 0 else out


def rotation_to_euler(r: np.ndarray) -> EulerAngles:
    """Roll-pitch-yaw angles of a body-to-inertial rotation ``Rz Ry Rx``.

    At ``theta = +/-pi/2`` yaw is fixed to zero and the remaining freedom is
    put into roll.
    """
    r31 = float(r[2, 0])
    if abs(r31) < 1.0 - 1e-12:
        theta = -math.asin(r31)
        ct = math.cos(theta)
        phi = math.atan2(r[2, 1] / ct, r[2, 2] / ct)
        psi = math.atan2(r[1, 0] / ct, r[0, 0] / ct)
        return EulerAngles(phi, theta, psi)
    if r31 < 0.0:
        return EulerAngles(math.atan2(r[0, 1], r[0, 2]), math.pi / 2, 0.0)
    return EulerAngles(math.atan2(-r[0, 1], -r[0, 2]), -math.pi / 2, 0.0)


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormality_error(r: np.ndarray) -> float:
    return float(np.max(np.abs(r @ r.T - np.eye(3))))


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


@dataclass(frozen=True)
class HomogeneousTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls) -> "HomogeneousTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def translate(cls, x: float, y: float, z: float) -> "HomogeneousTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=float))

    @classmethod
    def rotate(cls, r: np.ndarray) -> "HomogeneousTransform":
        return cls(np.asarray(r, dtype=float), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "HomogeneousTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "HomogeneousTransform":
        rt = self.rotation.T
        return HomogeneousTransform(rt, -rt @ self.translation)

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def __matmul__(self, other: "HomogeneousTransform") -> "HomogeneousTransform":
        return compose(self, other)


def compose(a: HomogeneousTransform, b: HomogeneousTransform) -> HomogeneousTransform:
    r = a.rotation @ b.rotation
    if orthonormality_error(r) > _REORTHO_TOL:
        r = _reorthonormalize(r)
    return HomogeneousTransform(r, a.rotation @ b.translation + a.translation)
