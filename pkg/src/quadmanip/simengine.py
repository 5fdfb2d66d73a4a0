"""Scenario-driven, fixed-step closed-loop simulation with CSV telemetry.

A run precomputes the reference samples, payload-parameter schedule,
disturbance schedule and measurement noise on the control grid, then hands
everything to one compiled loop.  Results are bit-for-bit reproducible for a
given scenario file and seed.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _loop
from .control import AXES, TILT_LIMIT, Controller, Mixer, RicAxisGains, Setpoint, default_gains, mixer_matrix
from .dynamics import PayloadSpec, SystemParams, SystemState, pack_params
from .errors import DegenerateWindow, Diverged, KinematicsError, ScenarioError
from .kinematics import (
    Branch,
    EndEffectorPose,
    IkSolution,
    Multiplicity,
    forward_kinematics_batch,
    inverse_kinematics,
)
from .spatial import wrap_angle
from .trajectory import COORDINATES, TrajectoryPlan, plan_quintic, sample

log = logging.getLogger(__name__)

DEFAULT_TRANSIT = 5.0
BAND = 0.01
STEADY_WINDOW = 2.0
SCENARIO_DIR = Path(__file__).with_name("scenarios")

STATE_NAMES = ("X", "Y", "Z", "phi", "theta", "psi", "theta1", "theta2")
COLUMNS = (
    ("t",)
    + STATE_NAMES
    + tuple(f"{n}_dot" for n in STATE_NAMES)
    + tuple(f"{n}_ref" for n in COORDINATES)
    + tuple(f"{n}_ref_dot" for n in COORDINATES)
    + ("phi_des", "theta_des", "T_cmd", "tau_a1", "tau_a2", "tau_a3", "tau_m1", "tau_m2")
    + ("omega1", "omega2", "omega3", "omega4")
    + ("ee_x", "ee_y", "ee_z", "ee_phi", "ee_theta", "ee_psi")
    + ("ee_x_ref", "ee_y_ref", "ee_z_ref", "ee_phi_ref", "ee_theta_ref", "ee_psi_ref")
    + ("payload", "disturbance")
)
COL = {name: i for i, name in enumerate(COLUMNS)}
# state index of each planned coordinate
PLAN_TO_STATE = (0, 1, 2, 5, 6, 7)
NOISE_GROUPS = {
    "position": (0, 1, 2),
    "attitude": (3, 4, 5),
    "joints": (6, 7),
    "velocity": (8, 9, 10),
    "attitude_rate": (11, 12, 13),
    "joint_rate": (14, 15),
}


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Waypoint:
    pose: EndEffectorPose
    arrive: float
    transit: float = DEFAULT_TRANSIT
    branch: Branch = Branch.ElbowA


@dataclass(frozen=True)
class PayloadEvent:
    time: float
    attach: bool
    mass: float = 0.0


@dataclass(frozen=True)
class Disturbance:
    start: float
    end: float
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs.  ``initial=None`` starts at rest on waypoint 0."""

    waypoints: tuple[Waypoint, ...]
    duration: float
    dt: float = 1e-3
    initial: SystemState | None = None
    payload_events: tuple[PayloadEvent, ...] = ()
    disturbances: tuple[Disturbance, ...] = ()
    noise_std: np.ndarray = field(default_factory=lambda: np.zeros(16))
    params: SystemParams = field(default_factory=SystemParams)
    gains: dict = field(default_factory=default_gains)
    tilt_limit: float = TILT_LIMIT
    seed: int = 0
    decimation: int = 10
    substeps: int = 1
    name: str = "scenario"

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt", "must be positive")
        if not self.duration > 0:
            raise ScenarioError("duration", "must be positive")
        if self.decimation < 1:
            raise ScenarioError("decimation", "must be >= 1")
        if self.substeps < 1:
            raise ScenarioError("substeps", "must be >= 1")
        times = [e.time for e in self.payload_events]
        if times != sorted(times):
            raise ScenarioError("payload_events", "events must be time-ordered")
        if times and times[-1] > self.duration:
            raise ScenarioError("duration", "must not precede the last payload event")
        if not self.waypoints and self.initial is None:
            raise ScenarioError("waypoints", "need an initial state or at least one waypoint")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_updates(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _vec(v, n, path):
    if not isinstance(v, list) or len(v) != n:
        raise ScenarioError(path, f"expected a list of {n} numbers")
    return np.array([_num(x, f"{path}[{i}]") for i, x in enumerate(v)])


def _check_keys(obj, allowed, path, required=()):
    if not isinstance(obj, dict):
        raise ScenarioError(path or "<root>", "expected an object")
    for k in obj:
        if k not in allowed:
            raise ScenarioError(f"{path}.{k}" if path else k, "unknown field")
    for k in required:
        if k not in obj:
            raise ScenarioError(f"{path}.{k}" if path else k, "required field missing")


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a decoded scenario document.  Field errors carry a dotted path."""
    top = {
        "name", "description", "dt", "duration", "seed", "decimation", "substeps", "initial",
        "waypoints", "payload_events", "disturbances", "noise", "params", "gains", "tilt_limit",
    }
    _check_keys(data, top, "", required=("duration", "waypoints"))
    kw: dict = {"name": str(data.get("name", "scenario"))}
    for key in ("dt", "duration", "tilt_limit"):
        if key in data:
            kw[key] = _num(data[key], key)
    for key in ("seed", "decimation", "substeps"):
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ScenarioError(key, f"expected an integer, got {v!r}")
            kw[key] = v

    if "initial" in data:
        ini = data["initial"]
        _check_keys(ini, {"q", "qdot"}, "initial", required=("q",))
        kw["initial"] = SystemState(
            _vec(ini["q"], 8, "initial.q"), _vec(ini.get("qdot", [0.0] * 8), 8, "initial.qdot")
        )

    wps = data["waypoints"]
    if not isinstance(wps, list):
        raise ScenarioError("waypoints", "expected a list")
    out_wps = []
    for i, w in enumerate(wps):
        p = f"waypoints[{i}]"
        _check_keys(w, {"position", "orientation", "arrive", "transit", "branch", "label"}, p,
                    required=("position", "orientation", "arrive"))
        branch = w.get("branch", "ElbowA")
        if branch not in ("ElbowA", "ElbowB"):
            raise ScenarioError(f"{p}.branch", "must be 'ElbowA' or 'ElbowB'")
        transit = _num(w.get("transit", DEFAULT_TRANSIT), f"{p}.transit")
        if transit < 0:
            raise ScenarioError(f"{p}.transit", "must be non-negative")
        out_wps.append(
            Waypoint(
                EndEffectorPose(_vec(w["position"], 3, f"{p}.position"), _vec(w["orientation"], 3, f"{p}.orientation")),
                _num(w["arrive"], f"{p}.arrive"),
                transit,
                Branch(branch),
            )
        )
    kw["waypoints"] = tuple(out_wps)

    events = []
    for i, e in enumerate(data.get("payload_events", [])):
        p = f"payload_events[{i}]"
        _check_keys(e, {"time", "action", "mass"}, p, required=("time", "action"))
        if e["action"] not in ("attach", "detach"):
            raise ScenarioError(f"{p}.action", "must be 'attach' or 'detach'")
        attach = e["action"] == "attach"
        mass = _num(e.get("mass", 0.0), f"{p}.mass")
        if mass < 0 or (attach and "mass" not in e):
            raise ScenarioError(f"{p}.mass", "attach needs a non-negative mass")
        events.append(PayloadEvent(_num(e["time"], f"{p}.time"), attach, mass))
    kw["payload_events"] = tuple(events)

    dists = []
    for i, d in enumerate(data.get("disturbances", [])):
        p = f"disturbances[{i}]"
        _check_keys(d, {"start", "end", "force", "moment"}, p, required=("start", "end"))
        s, e = _num(d["start"], f"{p}.start"), _num(d["end"], f"{p}.end")
        if e < s:
            raise ScenarioError(f"{p}.end", "must not precede start")
        dists.append(
            Disturbance(s, e, _vec(d.get("force", [0, 0, 0]), 3, f"{p}.force"),
                        _vec(d.get("moment", [0, 0, 0]), 3, f"{p}.moment"))
        )
    kw["disturbances"] = tuple(dists)

    if "noise" in data:
        _check_keys(data["noise"], set(NOISE_GROUPS), "noise")
        std = np.zeros(16)
        for g, v in data["noise"].items():
            v = _num(v, f"noise.{g}")
            if v < 0:
                raise ScenarioError(f"noise.{g}", "must be non-negative")
            std[list(NOISE_GROUPS[g])] = v
        kw["noise_std"] = std

    if "params" in data:
        names = {f.name for f in dataclasses.fields(SystemParams)}
        _check_keys(data["params"], names, "params")
        upd = {}
        for k, v in data["params"].items():
            if isinstance(v, list):
                upd[k] = tuple(_num(x, f"params.{k}[{j}]") for j, x in enumerate(v))
            else:
                upd[k] = _num(v, f"params.{k}")
        try:
            kw["params"] = SystemParams(**upd)
        except (ValueError, TypeError) as exc:
            raise ScenarioError("params", str(exc)) from None

    if "gains" in data:
        _check_keys(data["gains"], set(AXES), "gains")
        gains = default_gains()
        names = {f.name for f in dataclasses.fields(RicAxisGains)}
        for axis, over in data["gains"].items():
            _check_keys(over, names, f"gains.{axis}")
            vals = {k: _num(v, f"gains.{axis}.{k}") for k, v in over.items()}
            try:
                gains[axis] = dataclasses.replace(gains[axis], **vals)
            except ValueError as exc:
                raise ScenarioError(f"gains.{axis}", str(exc)) from None
        kw["gains"] = gains

    return Scenario(**kw)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(data)


def bundled_scenario(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


# ---------------------------------------------------------------- planning


@dataclass
class PlanInfo:
    plan: TrajectoryPlan
    configs: np.ndarray  # (n_waypoints + 1, 6): start configuration then one per waypoint
    solutions: list[IkSolution]
    notes: list[str]


def _pick(solutions: list[IkSolution], branch: Branch) -> IkSolution:
    for s in solutions:
        if s.branch == branch:
            return s
    return solutions[0]


def _config(sol: IkSolution) -> np.ndarray:
    v = sol.vehicle
    return np.array([v.x, v.y, v.z, v.psi, sol.joints.theta1, sol.joints.theta2])


def build_plan(scenario: Scenario) -> PlanInfo:
    """IK on every waypoint, then synchronized rest-to-rest quintics between them.

    Angular coordinates are unwrapped onto the representative nearest the
    previous configuration so no segment takes the long way round.
    """
    sols, notes = [], []
    for i, wp in enumerate(scenario.waypoints):
        try:
            cands = inverse_kinematics(wp.pose, scenario.params.lengths)
        except KinematicsError as exc:
            raise type(exc)(f"waypoint {i}: {exc}") from None
        sol = _pick(cands, wp.branch)
        if sol.multiplicity is Multiplicity.Infinite:
            msg = f"waypoint {i}: case {sol.case}, infinite multiplicity (psi free, fixed to 0)"
            log.warning(msg)
            notes.append(msg)
        sols.append(sol)

    if scenario.initial is not None:
        q = scenario.initial.q
        start = q[list(PLAN_TO_STATE)].copy()
        targets = list(enumerate(scenario.waypoints))
        if targets and targets[0][1].arrive == 0.0 and targets[0][1].transit == 0.0:
            # setpoint step at t = 0: the plan starts on waypoint 0, not on the initial state
            cfg = _config(sols[0])
            for j in (3, 4, 5):
                cfg[j] = start[j] + wrap_angle(cfg[j] - start[j])
            start = cfg
            targets = targets[1:]
    else:
        start = _config(sols[0])
        targets = list(enumerate(scenario.waypoints))[1:]

    configs = [start]
    segs: list[list] = [[] for _ in COORDINATES]
    prev_arrive = 0.0
    prev = start
    for i, wp in targets:
        cfg = _config(sols[i])
        for j in (3, 4, 5):
            cfg[j] = prev[j] + wrap_angle(cfg[j] - prev[j])
        t0, tf = wp.arrive - wp.transit, wp.arrive
        if t0 < prev_arrive - 1e-12:
            raise ScenarioError(f"waypoints[{i}].arrive", "transit window overlaps the previous waypoint")
        try:
            for j, name in enumerate(COORDINATES):
                segs[j].append(plan_quintic(prev[j], cfg[j], 0.0, 0.0, 0.0, 0.0, t0, tf, name))
        except DegenerateWindow as exc:
            raise ScenarioError(f"waypoints[{i}].transit", str(exc)) from None
        configs.append(cfg)
        prev, prev_arrive = cfg, tf
    return PlanInfo(TrajectoryPlan(start, segs), np.array(configs), sols, notes)


def initial_state(scenario: Scenario, info: PlanInfo) -> SystemState:
    if scenario.initial is not None:
        return SystemState(scenario.initial.q, scenario.initial.qdot)
    q = np.zeros(8)
    q[list(PLAN_TO_STATE)] = info.plan.initial
    return SystemState(q)


# ---------------------------------------------------------------- telemetry


@dataclass
class Telemetry:
    """Logged frames, one row per logged control period, columns :data:`COLUMNS`."""

    data: np.ndarray
    name: str = "scenario"

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    def __len__(self):
        return self.data.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# columns: " + ",".join(COLUMNS) + "\n")
        buf.write(",".join(COLUMNS) + "\n")
        if len(self):
            np.savetxt(buf, self.data, fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "Telemetry":
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        if not lines:
            raise ValueError(f"{path}: empty telemetry")
        header = lines[0].strip().split(",")
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected column header")
        if len(lines) == 1:
            raise ValueError(f"{path}: telemetry has no frames")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        stem = Path(path).stem
        return cls(data, stem[: -len("_telemetry")] if stem.endswith("_telemetry") else stem)


# ---------------------------------------------------------------- summary


@dataclass
class HoldStats:
    start: float
    end: float
    steady_error: np.ndarray  # max |error| per planned coordinate over the final window


@dataclass
class EventStats:
    time: float
    kind: str  # "attach", "detach" or "disturbance"
    peak_error: float  # worst per-axis position error after the event (m)
    recovery_time: float  # nan if the band is never re-entered before the hold ends

    @property
    def attach(self) -> bool:
        return self.kind == "attach"


@dataclass
class RunSummary:
    name: str
    status: str
    dt: float
    duration: float
    seed: int
    frames: int
    max_error: np.ndarray
    holds: list[HoldStats]
    events: list[EventStats]
    wall_clock: float = float("nan")
    clipped_steps: int = 0
    saturated_steps: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def final_steady_error(self) -> np.ndarray:
        return self.holds[-1].steady_error if self.holds else np.full(6, np.nan)

    def to_kv(self) -> str:
        rows = [
            ("name", self.name), ("status", self.status), ("dt", repr(self.dt)),
            ("duration", repr(self.duration)), ("seed", self.seed), ("frames", self.frames),
            ("wall_clock_s", f"{self.wall_clock:.3f}"),
            ("clipped_steps", self.clipped_steps), ("saturated_steps", self.saturated_steps),
        ]
        for c, v in zip(COORDINATES, self.max_error):
            rows.append((f"max_error.{c}", repr(float(v))))
        for k, h in enumerate(self.holds):
            rows.append((f"hold[{k}].window", f"{h.start!r},{h.end!r}"))
            for c, v in zip(COORDINATES, h.steady_error):
                rows.append((f"hold[{k}].steady_error.{c}", repr(float(v))))
        for k, e in enumerate(self.events):
            rows.append((f"event[{k}].time", repr(e.time)))
            rows.append((f"event[{k}].kind", e.kind))
            rows.append((f"event[{k}].peak_error", repr(e.peak_error)))
            rows.append((f"event[{k}].recovery_time", repr(e.recovery_time)))
        for k, n in enumerate(self.notes):
            rows.append((f"note[{k}]", n))
        return "".join(f"{k}={v}\n" for k, v in rows)

    def to_table(self) -> str:
        out = [f"run {self.name}: {self.status}  ({self.frames} frames, dt={self.dt:g} s, "
               f"wall clock {self.wall_clock:.2f} s)"]
        head = "".join(f"{c:>11}" for c in COORDINATES)
        out.append(f"{'':24}{head}")
        out.append(f"{'max |error|':24}" + "".join(f"{v:11.2e}" for v in self.max_error))
        for h in self.holds:
            label = f"hold {h.start:6.2f}-{h.end:6.2f} s"
            out.append(f"{label:24}" + "".join(f"{v:11.2e}" for v in h.steady_error))
        for e in self.events:
            what = "disturbance" if e.kind == "disturbance" else f"payload {e.kind}"
            out.append(f"{what} at {e.time:.3f} s: peak {e.peak_error * 1e3:.1f} mm, "
                       f"back within {BAND * 100:g} cm after {e.recovery_time:.3f} s")
        out.extend(f"note: {n}" for n in self.notes)
        return "\n".join(out) + "\n"


def _runs(mask: np.ndarray):
    """``(first, last)`` index pairs of the True runs in ``mask``."""
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(np.int8), [0]])))
    return list(zip(idx[::2], idx[1::2] - 1))


def summarize(tel: Telemetry, name: str | None = None, **meta) -> RunSummary:
    """Metrics recomputable from the telemetry alone.

    A hold is a maximal run of frames whose reference rates are all exactly
    zero.  Steady error is the worst absolute error over the final
    ``STEADY_WINDOW`` seconds of the hold.  Recovery time after a payload flag
    change or the onset of a disturbance pulse is measured to the last frame
    (within that hold) whose worst position error exceeds ``BAND``.
    """
    t = tel.column("t")
    ref = tel.data[:, [COL[f"{c}_ref"] for c in COORDINATES]]
    act = tel.data[:, [COL[STATE_NAMES[i]] for i in PLAN_TO_STATE]]
    err = np.abs(act - ref)
    max_err = err.max(axis=0) if len(t) else np.full(6, np.nan)
    rates = tel.data[:, [COL[f"{c}_ref_dot"] for c in COORDINATES]]
    holds = []
    for a, b in _runs(np.all(rates == 0.0, axis=1)):
        sel = slice(a, b + 1)
        w = (t[sel] >= t[b] - STEADY_WINDOW)
        holds.append(HoldStats(float(t[a]), float(t[b]), err[sel][w].max(axis=0)))
    hold_runs = _runs(np.all(rates == 0.0, axis=1))
    pos_err = err[:, :3].max(axis=1)
    marks = []
    flag = tel.column("payload")
    for k in np.flatnonzero(np.diff(flag)) + 1:
        marks.append((k, "attach" if flag[k] > flag[k - 1] else "detach"))
    dist = tel.column("disturbance")
    for k in np.flatnonzero(np.diff(dist) > 0) + 1:
        marks.append((k, "disturbance"))
    if len(dist) and dist[0] > 0:
        marks.append((0, "disturbance"))
    events = []
    for k, kind in sorted(marks):
        end = next((b for a, b in hold_runs if a <= k <= b), len(t) - 1)
        seg = pos_err[k : end + 1]
        out = np.flatnonzero(seg > BAND)
        if out.size == 0:
            rec = 0.0
        elif out[-1] == seg.size - 1:
            rec = float("nan")
        else:
            rec = float(t[k + out[-1] + 1] - t[k])
        events.append(EventStats(float(t[k]), kind, float(seg.max()), rec))
    return RunSummary(
        name=name or tel.name,
        status=meta.pop("status", "completed"),
        dt=meta.pop("dt", float(t[1] - t[0]) if len(t) > 1 else float("nan")),
        duration=meta.pop("duration", float(t[-1]) if len(t) else 0.0),
        seed=meta.pop("seed", 0),
        frames=len(t),
        max_error=max_err,
        holds=holds,
        events=events,
        **meta,
    )


# ---------------------------------------------------------------- running


@dataclass
class Schedules:
    """Per-period inputs on the control grid."""

    times: np.ndarray
    sp_pos: np.ndarray
    sp_vel: np.ndarray
    ptable: np.ndarray
    pidx: np.ndarray
    attached: np.ndarray
    dist: np.ndarray
    noise: np.ndarray


def _snap(t: float, dt: float) -> int:
    return int(round(t / dt))


def build_schedules(scenario: Scenario, info: PlanInfo) -> Schedules:
    n, dt = scenario.n_steps, scenario.dt
    times = np.arange(n) * dt
    sp_pos, sp_vel, _ = sample(info.plan, times)

    tables = [pack_params(scenario.params, PayloadSpec())]
    pidx = np.zeros(n, dtype=np.int64)
    attached = np.zeros(n)
    for ev in scenario.payload_events:
        k = _snap(ev.time, dt)
        spec = PayloadSpec(ev.mass, True) if ev.attach else PayloadSpec()
        tables.append(pack_params(scenario.params, spec))
        pidx[k:] = len(tables) - 1
        attached[k:] = 1.0 if (ev.attach and ev.mass > 0) else 0.0

    dist = np.zeros((n, 6))
    for d in scenario.disturbances:
        dist[_snap(d.start, dt) : _snap(d.end, dt)] += np.concatenate([d.force, d.moment])

    if np.any(scenario.noise_std > 0):
        rng = np.random.default_rng(scenario.seed)
        noise = rng.standard_normal((n, 16)) * scenario.noise_std
    else:
        noise = np.zeros((0, 16))
    return Schedules(times, sp_pos, sp_vel, np.array(tables), pidx, attached, dist, noise)


class Simulation:
    """Stateful runner; :meth:`step` advances one control period, :meth:`run` the rest."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.info = build_plan(scenario)
        self.sched = build_schedules(scenario, self.info)
        self.controller = Controller(scenario.params, scenario.gains, scenario.tilt_limit)
        self.mixer = Mixer(scenario.params)
        p = scenario.params
        self._kf = np.array(p.kF)
        self._km = np.array(p.kM)
        self._ginv = np.linalg.inv(mixer_matrix(p))
        self.x = initial_state(scenario, self.info).vector()
        self.k = 0
        self.clipped = 0
        self.saturated = 0
        self._rows: list[np.ndarray] = []

    @property
    def t(self) -> float:
        return self.k * self.scenario.dt

    @property
    def state(self) -> SystemState:
        return SystemState.from_vector(self.x)

    def _args(self):
        s = self.scenario
        return (self.controller.gain_table, self.controller.state_table, self.controller.weight,
                self.controller.tilt_limit, self._ginv, self._kf, self._km, s.params.d, s.params.omega_max)

    def _raise(self, status: int, k: int):
        reason = {
            _loop.DIVERGED_MAGNITUDE: "state magnitude exceeded 1e6",
            _loop.DIVERGED_PITCH: "|theta| reached 85 deg",
            _loop.DIVERGED_NONFINITE: "non-finite state",
        }[status]
        tel = self.telemetry()
        raise Diverged((k + 1) * self.scenario.dt, reason, tel)

    def step(self) -> np.ndarray:
        """Advance one period; returns the raw frame ``[x, cmd, phi_des, theta_des, omega]``."""
        s, sc, k = self.scenario, self.sched, self.k
        if k >= s.n_steps:
            raise IndexError("scenario finished")
        meas = self.x + sc.noise[k] if sc.noise.shape[0] else self.x.copy()
        cmd, omega, applied = np.empty(6), np.empty(4), np.empty(6)
        g, st, w, tilt, ginv, kf, km, d, om = self._args()
        xn, phi_des, theta_des, status, clipped, saturated = _loop.closed_loop_step(
            self.x, meas, sc.sp_pos[k], sc.sp_vel[k], g, st, w, tilt, ginv, kf, km, d, om,
            sc.ptable[sc.pidx[k]], sc.dist[k], s.dt, s.substeps, cmd, omega, applied,
        )
        raw = np.concatenate([self.x, cmd, [phi_des, theta_des], omega])
        self.clipped += bool(clipped)
        self.saturated += bool(saturated)
        if k % s.decimation == 0:
            self._rows.append(raw)
        if status != _loop.OK:
            self._raise(status, k)
        self.x = xn
        self.k += 1
        return raw

    def run(self) -> None:
        s, sc = self.scenario, self.sched
        k0 = self.k
        n_left = s.n_steps - k0
        if n_left <= 0:
            return
        first = (-k0) % s.decimation
        frames = np.empty(((n_left - first + s.decimation - 1) // s.decimation if n_left > first else 0, 28))
        noise = sc.noise[k0:] if sc.noise.shape[0] else sc.noise
        g, st, w, tilt, ginv, kf, km, d, om = self._args()
        if first:
            # align the compiled loop's decimation phase with the global step index
            for _ in range(first):
                self.step()
            return self.run()
        x, nf, status, kstop, ncl, nsat = _loop.run_loop(
            self.x, sc.sp_pos[k0:], sc.sp_vel[k0:], noise, g, st, w, tilt, ginv, kf, km, d, om,
            sc.ptable, sc.pidx[k0:], sc.dist[k0:], s.dt, s.substeps, s.decimation, frames,
        )
        self._rows.extend(frames[:nf])
        self.clipped += ncl
        self.saturated += nsat
        self.x = x
        self.k = k0 + kstop
        if status != _loop.OK:
            self._raise(status, self.k)

    def telemetry(self) -> Telemetry:
        s, sc = self.scenario, self.sched
        raw = np.array(self._rows).reshape(-1, 28)
        ks = np.arange(raw.shape[0]) * s.decimation
        data = np.empty((raw.shape[0], len(COLUMNS)))
        data[:, 0] = sc.times[ks] if ks.size else []
        data[:, 1:17] = raw[:, :16]
        data[:, 17:23] = sc.sp_pos[ks]
        data[:, 23:29] = sc.sp_vel[ks]
        data[:, 29:31] = raw[:, 22:24]
        data[:, 31:37] = raw[:, 16:22]
        data[:, 37:41] = raw[:, 24:28]
        lengths = s.params.lengths
        data[:, 41:47] = forward_kinematics_batch(raw[:, :8], lengths) if ks.size else np.empty((0, 6))
        qref = np.zeros((ks.size, 8))
        qref[:, list(PLAN_TO_STATE)] = sc.sp_pos[ks]
        data[:, 47:53] = forward_kinematics_batch(qref, lengths) if ks.size else np.empty((0, 6))
        data[:, 53] = sc.attached[ks]
        data[:, 54] = np.any(sc.dist[ks] != 0.0, axis=1)
        return Telemetry(data, s.name)


def run_scenario(scenario: Scenario) -> tuple[Telemetry, RunSummary]:
    """Full closed-loop run.  On divergence, :class:`Diverged` carries the partial telemetry."""
    t0 = time.perf_counter()
    sim = Simulation(scenario)
    sim.run()
    wall = time.perf_counter() - t0
    tel = sim.telemetry()
    summary = summarize(
        tel, scenario.name, dt=scenario.dt, duration=scenario.duration, seed=scenario.seed,
        wall_clock=wall, clipped_steps=sim.clipped, saturated_steps=sim.saturated,
        notes=list(sim.info.notes),
    )
    if sim.saturated:
        log.warning("%s: rotor speed saturated in %d periods", scenario.name, sim.saturated)
    return tel, summary


def step(sim: Simulation) -> np.ndarray:
    return sim.step()


def write_outputs(out_dir, tel: Telemetry, summary: RunSummary) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "telemetry": out / f"{summary.name}_telemetry.csv",
        "summary": out / f"{summary.name}_summary.txt",
        "report": out / f"{summary.name}_report.txt",
    }
    tel.write_csv(paths["telemetry"])
    paths["summary"].write_text(summary.to_kv())
    paths["report"].write_text(summary.to_table())
    return paths


def _batch_one(args):
    path, out_dir, overrides = args
    sc = load_scenario(path)
    if overrides:
        sc = sc.with_updates(**overrides)
    sc = sc.with_updates(name=Path(path).stem) if sc.name == "scenario" else sc
    try:
        tel, summ = run_scenario(sc)
    except Diverged as exc:
        if exc.telemetry is not None:
            exc.telemetry.write_csv(Path(out_dir) / f"{sc.name}_telemetry.csv")
        return str(path), f"diverged: {exc}"
    write_outputs(out_dir, tel, summ)
    return str(path), summ.status


def run_batch(paths, out_dir, overrides=None, workers: int = 1) -> list[tuple[str, str]]:
    """Run independent scenarios, optionally across processes.  Returns ``(path, status)`` pairs."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), str(out_dir), overrides or {}) for p in sorted(paths)]
    if workers <= 1:
        return [_batch_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_batch_one, jobs))
