"""Quintic point-to-point reference trajectories."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow

MIN_WINDOW = 1e-6
COORDINATES = ("X", "Y", "Z", "psi", "theta1", "theta2")


@dataclass(frozen=True)
class QuinticSegment:
    """``q(t) = sum c_k (t - t_start)^k`` on ``[t_start, t_end]``."""

    coeffs: np.ndarray
    t_start: float
    t_end: float
    coordinate: str = ""

    def evaluate(self, t: float) -> tuple[float, float, float]:
        c = self.coeffs
        s = t - self.t_start
        pos = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))))
        vel = c[1] + s * (2 * c[2] + s * (3 * c[3] + s * (4 * c[4] + s * 5 * c[5])))
        acc = 2 * c[2] + s * (6 * c[3] + s * (12 * c[4] + s * 20 * c[5]))
        return float(pos), float(vel), float(acc)


def plan_quintic(q0, qf, v0, vf, a0, af, t0, tf, coordinate: str = "") -> QuinticSegment:
    T = tf - t0
    if not T >= MIN_WINDOW:
        raise DegenerateWindow(f"window {T!r} s shorter than {MIN_WINDOW:g} s")
    h = qf - q0
    c = np.array(
        [
            q0,
            v0,
            a0 / 2.0,
            (20 * h - (8 * vf + 12 * v0) * T - (3 * a0 - af) * T**2) / (2 * T**3),
            (-30 * h + (14 * vf + 16 * v0) * T + (3 * a0 - 2 * af) * T**2) / (2 * T**4),
            (12 * h - 6 * (vf + v0) * T + (af - a0) * T**2) / (2 * T**5),
        ],
        dtype=float,
    )
    return QuinticSegment(c, float(t0), float(tf), coordinate)


@dataclass
class TrajectoryPlan:
    """Per-coordinate segment lists with hold semantics between them.

    Outside every segment a coordinate holds the end value of the most recent
    segment (or its initial value before the first one) with zero rates.
    """

    initial: np.ndarray
    segments: list[list[QuinticSegment]]
    coordinates: tuple[str, ...] = COORDINATES
    _starts: list[list[float]] = field(init=False, repr=False)

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if len(self.segments) != len(self.coordinates) or self.initial.shape != (len(self.coordinates),):
            raise ValueError("one segment list and one initial value per coordinate required")
        for segs in self.segments:
            for a, b in zip(segs, segs[1:]):
                if b.t_start < a.t_end:
                    raise ValueError("segments overlap or are out of order")
        self._starts = [[s.t_start for s in segs] for segs in self.segments]

    @classmethod
    def constant(cls, values) -> "TrajectoryPlan":
        values = np.asarray(values, dtype=float)
        return cls(values, [[] for _ in values])

    def windows(self) -> list[tuple[float, float]]:
        """Distinct segment windows across all coordinates, sorted."""
        return sorted({(s.t_start, s.t_end) for segs in self.segments for s in segs})

    def final(self) -> np.ndarray:
        return np.array(
            [segs[-1].evaluate(segs[-1].t_end)[0] if segs else v for segs, v in zip(self.segments, self.initial)]
        )


def evaluate(plan: TrajectoryPlan, t: float):
    """Position, velocity and acceleration arrays for every coordinate at ``t``."""
    n = len(plan.coordinates)
    pos = np.empty(n)
    vel = np.zeros(n)
    acc = np.zeros(n)
    for i, segs in enumerate(plan.segments):
        k = bisect.bisect_right(plan._starts[i], t) - 1
        if k < 0:
            pos[i] = plan.initial[i]
            continue
        seg = segs[k]
        if t <= seg.t_end:
            pos[i], vel[i], acc[i] = seg.evaluate(t)
        else:
            pos[i] = seg.evaluate(seg.t_end)[0]
    return pos, vel, acc


def rest_to_rest_plan(waypoints, times) -> TrajectoryPlan:
    """Synchronized rest-to-rest quintics through configuration ``waypoints``.

    ``waypoints[0]`` is the initial configuration; ``times[k] = (t0, tf)`` is the
    transit window into ``waypoints[k + 1]``.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    n = waypoints.shape[1]
    segs: list[list[QuinticSegment]] = [[] for _ in range(n)]
    for k, (t0, tf) in enumerate(times):
        for i in range(n):
            segs[i].append(
                plan_quintic(waypoints[k, i], waypoints[k + 1, i], 0.0, 0.0, 0.0, 0.0, t0, tf, COORDINATES[i])
            )
    return TrajectoryPlan(waypoints[0], segs)


def sample(plan: TrajectoryPlan, ts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`evaluate` over the time grid ``ts``; arrays of shape ``(len(ts), n)``."""
    ts = np.asarray(ts, dtype=float)
    n = len(plan.coordinates)
    pos = np.tile(plan.initial, (ts.size, 1))
    vel = np.zeros((ts.size, n))
    acc = np.zeros((ts.size, n))
    for i, segs in enumerate(plan.segments):
        for seg in segs:
            c = seg.coeffs
            end = seg.evaluate(seg.t_end)[0]
            pos[ts > seg.t_end, i] = end
            m = (ts >= seg.t_start) & (ts <= seg.t_end)
            s = ts[m] - seg.t_start
            pos[m, i] = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))))
            vel[m, i] = c[1] + s * (2 * c[2] + s * (3 * c[3] + s * (4 * c[4] + s * 5 * c[5])))
            acc[m, i] = 2 * c[2] + s * (6 * c[3] + s * (12 * c[4] + s * 20 * c[5]))
    return pos, vel, acc
