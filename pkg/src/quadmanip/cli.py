"""Command-line front end: ``quadmanip {fk,ik,simulate,fit,plot}``.

Exit codes: 0 success, 2 usage or input error, 3 kinematics error, 4 simulation divergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import DegenerateRegressor, Diverged, InsufficientData, KinematicsError, ScenarioError

EXIT_OK, EXIT_USAGE, EXIT_KINEMATICS, EXIT_DIVERGED = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _finite(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return v


def _lengths(args):
    from .kinematics import LinkLengths

    return LinkLengths(args.L0, args.L1, args.L2)


def _add_lengths(p):
    p.add_argument("--L0", type=_finite, default=0.030, help="base link length [m] (default 0.030)")
    p.add_argument("--L1", type=_finite, default=0.070, help="link 1 length [m] (default 0.070)")
    p.add_argument("--L2", type=_finite, default=0.085, help="link 2 length [m] (default 0.085)")


def _fmt(v) -> str:
    return " ".join(f"{float(x):.12g}" for x in v)


def cmd_fk(args) -> int:
    from .kinematics import JointAngles, VehicleConfig, forward_kinematics
    from .spatial import EulerAngles

    k = math.pi / 180.0 if args.degrees else 1.0
    pose = forward_kinematics(
        VehicleConfig(args.x, args.y, args.z, args.psi * k),
        EulerAngles(args.phi * k, args.theta * k, args.psi * k),
        JointAngles(args.theta1 * k, args.theta2 * k),
        _lengths(args),
    )
    unit = "deg" if args.degrees else "rad"
    print(f"position [m] = {_fmt(pose.position)}")
    print(f"orientation [{unit}] = {_fmt(np.asarray(pose.orientation) / k)}")
    return EXIT_OK


def cmd_ik(args) -> int:
    from .kinematics import EndEffectorPose, Multiplicity, inverse_kinematics
    from .spatial import HomogeneousTransform

    k = math.pi / 180.0 if args.degrees else 1.0
    position = np.array(args.position, float)
    if args.matrix is not None:
        target = HomogeneousTransform(np.array(args.matrix, float).reshape(3, 3), position)
    else:
        target = EndEffectorPose(position, np.array(args.orientation, float) * k)
    try:
        sols = inverse_kinematics(target, _lengths(args))
    except KinematicsError as exc:
        print(f"ik: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_KINEMATICS
    unit = "deg" if args.degrees else "rad"
    for s in sols:
        v = s.vehicle
        line = (
            f"{s.branch.value} case={s.case} X={v.x:.12g} Y={v.y:.12g} Z={v.z:.12g} "
            f"psi={v.psi / k:.12g} theta1={s.joints.theta1 / k:.12g} theta2={s.joints.theta2 / k:.12g} [m, {unit}]"
        )
        if s.multiplicity is Multiplicity.Infinite:
            line += "  infinite family (psi free)"
        print(line)
    return EXIT_OK


def _overrides(args) -> dict:
    out = {}
    for key in ("dt", "duration", "seed", "decimation", "substeps"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def cmd_simulate(args) -> int:
    from . import simengine

    if args.batch:
        paths = sorted(Path(args.batch).glob("*.json"))
        if not paths:
            print(f"simulate: no scenario files in {args.batch}", file=sys.stderr)
            return EXIT_USAGE
        try:
            results = simengine.run_batch(paths, args.output, _overrides(args), args.workers)
        except ScenarioError as exc:
            print(f"simulate: scenario error at {exc}", file=sys.stderr)
            return EXIT_USAGE
        code = EXIT_OK
        for path, status in results:
            print(f"{path}: {status}")
            if status.startswith("diverged"):
                code = EXIT_DIVERGED
        return code

    if args.scenario is None:
        print("simulate: a scenario file or --batch DIR is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        sc = simengine.load_scenario(args.scenario)
        over = _overrides(args)
        if over:
            sc = sc.with_updates(**over)
    except ScenarioError as exc:
        print(f"simulate: scenario error at {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KinematicsError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_KINEMATICS
    out = Path(args.output)
    try:
        tel, summary = simengine.run_scenario(sc)
    except KinematicsError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_KINEMATICS
    except ScenarioError as exc:
        print(f"simulate: scenario error at {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Diverged as exc:
        out.mkdir(parents=True, exist_ok=True)
        if exc.telemetry is not None:
            exc.telemetry.write_csv(out / f"{sc.name}_telemetry.csv")
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    paths = simengine.write_outputs(out, tel, summary)
    if args.plots:
        from .plotting import plot_telemetry

        for p in plot_telemetry(tel, out):
            paths[p.stem] = p
    sys.stdout.write(summary.to_table())
    for label, p in paths.items():
        print(f"wrote {label}: {p}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .identification import fit_rotor_coefficients, read_log_csv

    try:
        log = read_log_csv(args.log, args.rotor_id)
        res = fit_rotor_coefficients(log)
    except (OSError, ValueError, InsufficientData, DegenerateRegressor) as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    kv = "".join(f"{k}={v!r}\n" for k, v in res.as_dict().items())
    print(f"rotor {res.rotor_id}: kF = {res.kF:.6e} N s^2, kM = {res.kM:.6e} N m s^2 "
          f"({res.n_samples} samples, rms residual {res.residual_rms_thrust:.3g} N / "
          f"{res.residual_rms_moment:.3g} N m)")
    sys.stdout.write(kv)
    if args.output:
        Path(args.output).write_text(kv)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import CHANNELS, plot_telemetry
    from .simengine import Telemetry

    groups = [c.strip() for c in args.channels.split(",") if c.strip()]
    bad = [g for g in groups if g not in CHANNELS]
    if bad:
        print(f"plot: unknown channel group(s) {', '.join(bad)}; choose from {', '.join(CHANNELS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        tel = Telemetry.read_csv(args.telemetry)
        paths = plot_telemetry(tel, args.output, groups)
    except (OSError, ValueError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="quadmanip", description="Quadrotor with a two-link arm: kinematics, simulation, identification.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fk = sub.add_parser("fk", help="forward kinematics of the gripper",
                        description="Gripper pose for a vehicle/joint configuration. Lengths in m; "
                                    "angles in rad unless --degrees.")
    for name, unit in (("x", "m"), ("y", "m"), ("z", "m")):
        fk.add_argument(f"--{name}", type=_finite, default=0.0, help=f"vehicle {name.upper()} [{unit}]")
    fk.add_argument("--phi", type=_finite, default=0.0, help="vehicle roll [rad, or deg with --degrees]")
    fk.add_argument("--theta", type=_finite, default=0.0, help="vehicle pitch [rad, or deg with --degrees]")
    fk.add_argument("--psi", type=_finite, default=0.0, help="vehicle yaw [rad, or deg with --degrees]")
    fk.add_argument("--theta1", type=_finite, default=0.0, help="joint 1 angle [rad, or deg with --degrees]")
    fk.add_argument("--theta2", type=_finite, default=0.0, help="joint 2 angle [rad, or deg with --degrees]")
    fk.add_argument("--degrees", action="store_true", help="read and print angles in degrees")
    _add_lengths(fk)
    fk.set_defaults(func=cmd_fk)

    ik = sub.add_parser("ik", help="closed-form inverse kinematics (level vehicle)",
                        description="All vehicle/joint solutions placing the gripper at a pose. Position in m; "
                                    "orientation as roll pitch yaw in rad unless --degrees.")
    ik.add_argument("--position", type=_finite, nargs=3, required=True, metavar=("X", "Y", "Z"),
                    help="gripper position [m]")
    rot = ik.add_mutually_exclusive_group(required=True)
    rot.add_argument("--orientation", type=_finite, nargs=3, metavar=("PHI", "THETA", "PSI"),
                     help="gripper roll, pitch, yaw [rad, or deg with --degrees]")
    rot.add_argument("--matrix", type=_finite, nargs=9, metavar="R",
                     help="gripper-to-inertial rotation, row-major [-]")
    ik.add_argument("--degrees", action="store_true", help="read and print angles in degrees")
    _add_lengths(ik)
    ik.set_defaults(func=cmd_ik)

    sim = sub.add_parser("simulate", help="run a closed-loop scenario",
                         description="Run a JSON scenario (SI units, rad) and write telemetry CSV, "
                                     "key=value summary, text report and SVG plots.")
    sim.add_argument("scenario", nargs="?", help="scenario JSON file")
    sim.add_argument("-o", "--output", default="out", help="output directory (default ./out)")
    sim.add_argument("--dt", type=_finite, help="override control/integration step [s]")
    sim.add_argument("--duration", type=_finite, help="override simulated duration [s]")
    sim.add_argument("--seed", type=int, help="override measurement-noise seed [-]")
    sim.add_argument("--decimation", type=int, help="log every N-th step [steps]")
    sim.add_argument("--substeps", type=int, help="RK4 substeps per control step [-]")
    sim.add_argument("--no-plots", dest="plots", action="store_false", help="skip SVG rendering")
    sim.add_argument("--batch", metavar="DIR", help="run every *.json scenario in DIR")
    sim.add_argument("--workers", type=int, default=1, help="parallel processes for --batch [-]")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit rotor thrust/drag coefficients",
                         description="Least-squares kF [N s^2] and kM [N m s^2] from a CSV log with header "
                                     "omega,thrust,drag_moment in rad/s, N, N m.")
    fit.add_argument("log", help="CSV sample log")
    fit.add_argument("--rotor-id", type=int, default=0, help="rotor index recorded in the report [-]")
    fit.add_argument("-o", "--output", help="also write the key=value report here")
    fit.set_defaults(func=cmd_fit)

    plot = sub.add_parser("plot", help="render SVG plots from telemetry",
                          description="Desired vs actual per channel group, time in s, positions in m, "
                                      "angles in rad, rotor speeds in rad/s.")
    plot.add_argument("telemetry", help="telemetry CSV written by simulate")
    plot.add_argument("--channels", default="position,attitude,joints,end_effector",
                      help="comma list from position, attitude, joints, end_effector, rotors")
    plot.add_argument("-o", "--output", default="plots", help="output directory (default ./plots)")
    plot.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
