"""Per-rotor thrust/drag coefficient estimation from bench logs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateRegressor, InsufficientData

COLUMNS = ("omega", "thrust", "drag_moment")


@dataclass(frozen=True)
class RotorSampleLog:
    omega: np.ndarray
    thrust: np.ndarray
    drag_moment: np.ndarray
    rotor_id: int = 0

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, c), dtype=float).reshape(-1) for c in COLUMNS]
        if len({a.size for a in arrs}) != 1:
            raise ValueError("omega, thrust and drag_moment must have equal length")
        if np.any(arrs[0] < 0):
            raise ValueError("omega must be non-negative")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("log contains non-finite values")
        for c, a in zip(COLUMNS, arrs):
            object.__setattr__(self, c, a)

    def __len__(self):
        return self.omega.size


@dataclass(frozen=True)
class FitResult:
    kF: float
    kM: float
    residual_rms_thrust: float
    residual_rms_moment: float
    n_samples: int
    rotor_id: int = 0

    def as_dict(self) -> dict:
        return {
            "rotor_id": self.rotor_id,
            "kF": self.kF,
            "kM": self.kM,
            "residual_rms_thrust": self.residual_rms_thrust,
            "residual_rms_moment": self.residual_rms_moment,
            "n_samples": self.n_samples,
        }


def fit_rotor_coefficients(log: RotorSampleLog) -> FitResult:
    """Least squares through the origin of thrust and moment against omega squared."""
    w2 = log.omega**2
    s4 = math.fsum(w2 * w2)
    if s4 < 1e-12:
        raise DegenerateRegressor(f"sum of omega^4 is {s4:.3g}")
    if np.unique(log.omega).size < 3:
        raise InsufficientData("need at least 3 distinct rotor speeds")
    kf = math.fsum(log.thrust * w2) / s4
    km = math.fsum(log.drag_moment * w2) / s4
    rms_f = float(np.sqrt(np.mean((log.thrust - kf * w2) ** 2)))
    rms_m = float(np.sqrt(np.mean((log.drag_moment - km * w2) ** 2)))
    return FitResult(kf, km, rms_f, rms_m, len(log), log.rotor_id)


def synthesize_rotor_log(
    kF: float,
    kM: float,
    speeds,
    noise: float = 0.0,
    seed: int = 0,
    rotor_id: int = 0,
) -> RotorSampleLog:
    """Bench log for ``F = kF w^2``, ``M = kM w^2`` with multiplicative Gaussian noise."""
    w = np.asarray(speeds, dtype=float)
    f = kF * w**2
    m = kM * w**2
    if noise > 0:
        rng = np.random.default_rng(seed)
        f = f * (1.0 + noise * rng.standard_normal(w.size))
        m = m * (1.0 + noise * rng.standard_normal(w.size))
    return RotorSampleLog(w, f, m, rotor_id)


def read_log_csv(path, rotor_id: int = 0) -> RotorSampleLog:
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != list(COLUMNS):
            raise ValueError(f"{path}: header must be {','.join(COLUMNS)}")
        rows = [[float(r[c]) for c in reader.fieldnames] for r in reader]
    if not rows:
        raise InsufficientData(f"{path}: no samples")
    a = np.array(rows)
    return RotorSampleLog(a[:, 0], a[:, 1], a[:, 2], rotor_id)


def write_log_csv(log: RotorSampleLog, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in zip(log.omega, log.thrust, log.drag_moment):
            w.writerow([repr(float(v)) for v in row])
