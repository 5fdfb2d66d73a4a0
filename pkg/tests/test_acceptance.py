"""End-to-end acceptance criteria; each test prints one PASS/FAIL line with the measured value."""

import math
import time

import numpy as np
import pytest

from conftest import HANGING, hover_scenario
from oracles import quintic_by_solve
from quadmanip import _rigid
from quadmanip.control import Controller, Setpoint, mixer_matrix, mixer_solve
from quadmanip.dynamics import (
    ControlCommand,
    InteractionWrench,
    PayloadSpec,
    RotorSpeeds,
    SystemParams,
    SystemState,
    energies,
    forward_dynamics,
    inverse_dynamics,
    mass_matrix,
    pack_params,
    reduced_quadrotor_eom,
    rotor_forces,
)
from quadmanip.identification import fit_rotor_coefficients, synthesize_rotor_log
from quadmanip.kinematics import (
    Branch,
    EndEffectorPose,
    JointAngles,
    LinkLengths,
    Multiplicity,
    VehicleConfig,
    end_effector_transform,
    forward_kinematics_batch,
    inverse_kinematics,
    reset_rotation,
)
from quadmanip.simengine import Simulation, bundled_scenario, load_scenario, run_scenario, scenario_from_dict
from quadmanip.spatial import EulerAngles, HomogeneousTransform
from quadmanip.trajectory import plan_quintic

RESULTS: list[str] = []
L = LinkLengths()
P = SystemParams()


def verdict(number, title, ok, measured):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {measured}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _wrap(a):
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi


def _rotations(euler):
    """ZYX rotation matrices for an ``(N, 3)`` array of roll, pitch, yaw."""
    f, t, p = euler.T
    cf, sf, ct, st, cp, sp = np.cos(f), np.sin(f), np.cos(t), np.sin(t), np.cos(p), np.sin(p)
    return np.stack([
        np.stack([cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf], -1),
        np.stack([sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf], -1),
        np.stack([-st, ct * sf, ct * cf], -1),
    ], 1)


def test_01_kinematics_round_trip():
    rng = np.random.default_rng(1)
    n = 10_000
    cfg = np.column_stack([rng.uniform(-5, 5, (n, 3)), rng.uniform(-math.pi, math.pi, (n, 3))])
    bad = np.abs(np.sin(cfg[:, 4])) <= 1e-3
    cfg[bad, 4] += 0.01
    q = np.zeros((n, 8))
    q[:, [0, 1, 2, 5, 6, 7]] = cfg

    t0 = time.perf_counter()
    poses = forward_kinematics_batch(q, L)
    branches, worst_coord = [], 0.0
    for k in range(n):
        sols = inverse_kinematics(EndEffectorPose(poses[k, :3], poses[k, 3:]), L)
        got = np.array([[s.vehicle.x, s.vehicle.y, s.vehicle.z, s.vehicle.psi, s.joints.theta1, s.joints.theta2]
                        for s in sols])
        d = np.abs(got - cfg[k])
        d[:, 3:] = np.abs(_wrap(d[:, 3:]))
        worst_coord = max(worst_coord, d.max(axis=1).min())
        branches.append((k, got))
    elapsed = time.perf_counter() - t0

    idx = np.array([k for k, got in branches for _ in got])
    qb = np.zeros((idx.size, 8))
    qb[:, [0, 1, 2, 5, 6, 7]] = np.concatenate([got for _, got in branches])
    back = forward_kinematics_batch(qb, L)
    worst_fk = max(np.abs(back[:, :3] - poses[idx, :3]).max(),
                   np.abs(_rotations(back[:, 3:]) - _rotations(poses[idx, 3:])).max())
    ok = worst_coord < 1e-9 and worst_fk < 1e-9 and elapsed < 5.0
    verdict(1, "FK/IK round trip, 10000 configurations",
            ok, f"max coord err {worst_coord:.2e}, max branch FK err {worst_fk:.2e}, {elapsed:.2f} s")


def test_02_ik_case_coverage():
    psi, t1, t2 = 0.7, 1.1, -0.4
    p = np.array([0.2, -0.3, 1.0])
    a, b = inverse_kinematics(HomogeneousTransform(reset_rotation(psi, t1, t2), p), L)
    err1 = max(
        abs(a.vehicle.psi - psi), abs(a.joints.theta1 - t1), abs(a.joints.theta2 - t2),
        abs(_wrap(b.vehicle.psi - psi - math.pi)), abs(b.joints.theta1 + t1), abs(_wrap(b.joints.theta2 - t2 - math.pi)),
    )
    case1 = (a.branch, b.branch, a.case, a.multiplicity) == (Branch.ElbowA, Branch.ElbowB, 1, Multiplicity.Two)
    (c2,) = inverse_kinematics(HomogeneousTransform(reset_rotation(0.3, 0.0, 0.5), p), L)
    err2 = max(abs(c2.vehicle.psi), abs(c2.joints.theta1), abs(_wrap(c2.joints.theta2 - 0.8)))
    (c3,) = inverse_kinematics(HomogeneousTransform(reset_rotation(0.3, math.pi, 0.5), p), L)
    err3 = max(abs(c3.vehicle.psi), abs(c3.joints.theta1 - math.pi), abs(_wrap(c3.joints.theta2 - 0.2)))
    infinite = c2.multiplicity is c3.multiplicity is Multiplicity.Infinite and (c2.case, c3.case) == (2, 3)
    worst = max(err1, err2, err3)
    verdict(2, "IK cases 1 (both branches), 2, 3", case1 and infinite and worst < 1e-12,
            f"max angle err {worst:.1e}, cases 2/3 infinite multiplicity: {infinite}")


def test_03_dynamics_consistency():
    rng = np.random.default_rng(3)
    worst_rt = worst_sym = 0.0
    min_eig = math.inf
    for _ in range(1000):
        q = np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(-0.6, 0.6, 2), rng.uniform(-3, 3, 3)])
        qd = rng.uniform(-1.5, 1.5, 8)
        st = SystemState(q, qd)
        qdd = rng.uniform(-5, 5, 8)
        qf, _ = inverse_dynamics(st, qdd, P, PayloadSpec(0.15, True))
        mm, bias = mass_matrix(st, P, PayloadSpec(0.15, True))
        back = np.linalg.solve(mm, qf - bias)
        worst_rt = max(worst_rt, np.abs(back - qdd).max() / max(1.0, np.abs(qdd).max()))
        worst_sym = max(worst_sym, np.abs(mm - mm.T).max())
        min_eig = min(min_eig, np.linalg.eigvalsh(mm).min())
    bare = SystemParams(m0=0.0, m1=0.0, m2=0.0)
    p = pack_params(bare)
    worst_dec = 0.0
    for _ in range(200):
        q = np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(-0.8, 0.8, 2), rng.uniform(-3, 3, 1), [0, 0]])
        qd = np.concatenate([rng.uniform(-2, 2, 6), [0, 0]])
        thrust, tau, wb = rotor_forces(RotorSpeeds(rng.uniform(300, 600, 4)), bare)
        qdd = _rigid.forward_dynamics(q, qd, np.array([thrust, *tau, 0, 0]), np.zeros(6), p, wb, 6)
        jv = np.array(_rigid._jv(q[3], q[4]))
        jvd = np.array(_rigid._jv_dot(q[3], q[4], qd[3], qd[4]))
        w = jv @ qd[3:6]
        red = reduced_quadrotor_eom(q[:6], np.concatenate([qd[:3], w]), thrust, tau, wb, InteractionWrench(), bare)
        got = np.concatenate([qdd[:3], jv @ qdd[3:6] + jvd @ qd[3:6]])
        worst_dec = max(worst_dec, np.abs(got - red).max() / max(1.0, np.abs(red).max()))
    ok = worst_rt < 1e-8 and worst_sym < 1e-9 and min_eig > 0 and worst_dec < 1e-12
    verdict(3, "FD/ID identity, mass matrix, decoupled vehicle", ok,
            f"FD(ID) rel err {worst_rt:.1e}, asym {worst_sym:.1e}, min eig {min_eig:.2e}, decoupling err {worst_dec:.1e}")


def _energy_drift(g, seconds, seed):
    rng = np.random.default_rng(seed)
    params = SystemParams(g=g)
    p = pack_params(params)
    q = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(-0.5, 0.5, 2), rng.uniform(-3, 3, 3)])
    qd = rng.uniform(-1, 1, 8)
    x = np.concatenate([q, qd])
    zero = np.zeros(6)
    ke0, pe0 = energies(SystemState(q, qd), params)
    e0, peak_ke, worst = ke0 + pe0, ke0, 0.0
    for _ in range(int(round(seconds / 0.1))):
        x = _rigid.rk4_substeps(x, zero, zero, p, 0.0, 1e-3, 100, 8)
        ke, pe = energies(SystemState(x[:8], x[8:]), params)
        peak_ke = max(peak_ke, ke)
        worst = max(worst, abs(ke + pe - e0))
    return worst, peak_ke, ke0


def test_04_conservation():
    ke_err, _, ke0 = _energy_drift(0.0, 10.0, 4)
    me_err, peak, _ = _energy_drift(9.81, 5.0, 5)
    rel_ke, rel_me = ke_err / ke0, me_err / peak
    verdict(4, "energy drift (KE g=0 10 s, mechanical 5 s / peak KE)", rel_ke < 1e-3 and rel_me < 1e-3,
            f"KE {rel_ke:.1e}, mechanical {rel_me:.1e}")


def _order_scenario(substeps):
    q0 = HANGING.tolist()
    tr = end_effector_transform(VehicleConfig(0.3, -0.2, 1.4, 0.5), EulerAngles(0, 0, 0.5), JointAngles(1.2, 0.4), L)
    from quadmanip.spatial import rotation_to_euler

    doc = {"dt": 2e-3, "duration": 3.0, "substeps": substeps, "decimation": 1000, "initial": {"q": q0},
           "waypoints": [{"position": tr.translation.tolist(),
                          "orientation": rotation_to_euler(tr.rotation).as_array().tolist(),
                          "arrive": 2.5, "transit": 2.5}]}
    return scenario_from_dict(doc)


def test_05_integrator_order():
    finals = {}
    for n in (1, 2, 4, 64):
        sim = Simulation(_order_scenario(n))
        sim.run()
        finals[n] = sim.x[:8].copy()
    errs = [np.abs(finals[n] - finals[64]).max() for n in (1, 2, 4)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    verdict(5, "RK4 convergence order (closed loop, 2 ms period, substeps 1/2/4)", min(orders) >= 3.5,
            f"orders {orders[0]:.2f}, {orders[1]:.2f}; errors {errs[0]:.1e}, {errs[1]:.1e}, {errs[2]:.1e}")


def test_06_mixer_identities():
    rng = np.random.default_rng(6)
    g = mixer_matrix(P)
    worst_a = worst_b = 0.0
    for _ in range(1000):
        w2 = rng.uniform(0, 1100.0**2, 4)
        thrust, tau, _ = rotor_forces(RotorSpeeds(np.sqrt(w2)), P)
        cmd = np.array([thrust, *tau])
        back = mixer_solve(cmd, P).omega ** 2
        worst_a = max(worst_a, np.abs(back - w2).max() / w2.max())
        t2, tau2, _ = rotor_forces(mixer_solve(cmd, P), P)
        worst_b = max(worst_b, np.abs(np.array([t2, *tau2]) - cmd).max() / np.abs(cmd).max())
    distinct = len({(a, b) for a, b in zip(P.kF, P.kM)}) == 4 and np.linalg.matrix_rank(g) == 4
    verdict(6, "mixer/rotor-force round trips", worst_a < 1e-12 and worst_b < 1e-12 and distinct,
            f"mix(forces) {worst_a:.1e}, forces(mix) {worst_b:.1e}")


def test_07_hover_equilibrium():
    ctrl = Controller(P)
    out = ctrl.step(Setpoint(HANGING[[0, 1, 2, 5, 6, 7]]), SystemState(HANGING), 1e-3)
    speeds = mixer_solve(out.cmd, P)
    thrust, tau, _ = rotor_forces(speeds, P)
    qdd = forward_dynamics(SystemState(HANGING), ControlCommand(thrust, tau, out.cmd.tau_m), speeds, P)
    worst = np.abs(qdd).max()
    ok = abs(out.cmd.T - 1.197 * 9.81) < 1e-12 and worst < 1e-9
    verdict(7, "hover equilibrium", ok, f"T = {out.cmd.T:.6f} N, max |qdd| {worst:.1e}")


@pytest.fixture(scope="module")
def s6():
    sc = load_scenario(bundled_scenario("paper_s6"))
    tel, summary = run_scenario(sc)
    # second run for timing without first-call compilation or cache loading
    t0 = time.perf_counter()
    tel2, _ = run_scenario(sc)
    return sc, tel, summary, tel2, time.perf_counter() - t0


def test_08_paper_s6(s6):
    sc, tel, summary, _, wall = s6
    final = summary.final_steady_error
    pos, ang = final[:3].max(), final[3:].max()
    rec = [e.recovery_time for e in summary.events]
    kinds = [e.kind for e in summary.events]
    ok = (summary.status == "completed" and kinds == ["attach", "detach"] and all(r < 5.0 for r in rec)
          and pos < 5e-3 and ang < 0.01 and wall < 10.0)
    verdict(8, "paper_s6 pick and place", ok,
            f"recovery {rec[0]:.2f} s / {rec[1]:.2f} s, peaks {summary.events[0].peak_error * 1e3:.1f} / "
            f"{summary.events[1].peak_error * 1e3:.1f} mm, final pos {pos * 1e3:.2f} mm, angles {ang:.1e} rad, "
            f"wall clock {wall:.2f} s")


def test_09_identification():
    kf, km = P.kF, P.kM
    grid = np.arange(100.0, 1000.0, 100.0)
    exact = max(max(abs(r.kF / a - 1), abs(r.kM / b - 1))
                for a, b in zip(kf, km) for r in [fit_rotor_coefficients(synthesize_rotor_log(a, b, grid))])
    speeds = np.linspace(100, 1000, 50)
    noisy = max(max(abs(r.kF / a - 1), abs(r.kM / b - 1))
                for i, (a, b) in enumerate(zip(kf, km))
                for r in [fit_rotor_coefficients(synthesize_rotor_log(a, b, speeds, 0.01, seed=i))])
    verdict(9, "rotor coefficient fit", exact < 1e-14 and noisy < 0.01,
            f"noiseless rel err {exact:.1e}, 1% noise rel err {noisy * 100:.2f}%")


def test_10_trajectory():
    rng = np.random.default_rng(10)
    bc = sym = fd = 0.0
    h = 1e-6
    for _ in range(500):
        q0, qf, v0, vf, a0, af = rng.uniform(-2, 2, 6)
        t0, dur = rng.uniform(-1, 1), rng.uniform(0.5, 5)
        seg = plan_quintic(q0, qf, v0, vf, a0, af, t0, t0 + dur)
        bc = max(bc, np.abs(np.array(seg.evaluate(t0)) - [q0, v0, a0]).max(),
                 np.abs(np.array(seg.evaluate(t0 + dur)) - [qf, vf, af]).max())
        ref = quintic_by_solve(q0, qf, v0, vf, a0, af, t0, t0 + dur)
        bc = max(bc, np.abs(seg.coeffs - ref).max() * 1e-3)
        rr = plan_quintic(q0, qf, 0, 0, 0, 0, t0, t0 + dur)
        sym = max(sym, abs(rr.evaluate(t0 + dur / 2)[0] - (q0 + qf) / 2))
        t = t0 + rng.uniform(0.01, 0.99) * dur
        p, v, a = seg.evaluate(t)
        fd = max(fd, abs((seg.evaluate(t + h)[0] - seg.evaluate(t - h)[0]) / (2 * h) - v),
                 abs((seg.evaluate(t + h)[1] - seg.evaluate(t - h)[1]) / (2 * h) - a))
    verdict(10, "quintic trajectories", bc < 1e-12 and sym < 1e-12 and fd < 1e-6,
            f"boundary err {bc:.1e}, midpoint err {sym:.1e}, finite-difference err {fd:.1e}")


def test_11_determinism(s6):
    _, tel, _, tel2, _ = s6
    a = tel.to_csv()
    noisy = hover_scenario(3.0, noise_std=np.full(16, 1e-4), seed=11)
    b1, b2 = run_scenario(noisy)[0].to_csv(), run_scenario(noisy)[0].to_csv()
    same = a == tel2.to_csv() and b1 == b2
    verdict(11, "byte-identical telemetry on rerun", same,
            f"paper_s6 {len(a)} bytes identical: {a == tel2.to_csv()}, noisy hover identical: {b1 == b2}")
