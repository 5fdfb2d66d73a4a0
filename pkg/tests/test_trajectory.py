import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import quintic_by_solve
from quadmanip.errors import DegenerateWindow
from quadmanip.trajectory import TrajectoryPlan, evaluate, plan_quintic, rest_to_rest_plan, sample

finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite, finite, finite, st.floats(-5, 5), st.floats(0.1, 10))
def test_boundary_conditions(q0, qf, v0, vf, a0, af, t0, T):
    seg = plan_quintic(q0, qf, v0, vf, a0, af, t0, t0 + T)
    start, end = seg.evaluate(t0), seg.evaluate(t0 + T)
    scale = 1 + max(abs(x) for x in (q0, qf, v0, vf, a0, af))
    np.testing.assert_allclose(start, (q0, v0, a0), atol=1e-12 * scale)
    np.testing.assert_allclose(end, (qf, vf, af), atol=1e-12 * scale * max(1.0, 1 / T**2))
    ref = quintic_by_solve(q0, qf, v0, vf, a0, af, t0, t0 + T)
    np.testing.assert_allclose(seg.coeffs, ref, rtol=1e-9, atol=1e-9 * scale * max(1.0, T**-5))


def test_unit_rest_to_rest_polynomial():
    seg = plan_quintic(0.0, 1.0, 0, 0, 0, 0, 0.0, 1.0)
    np.testing.assert_allclose(seg.coeffs, [0, 0, 0, 10, -15, 6], atol=1e-14)
    for t in np.linspace(0, 1, 11):
        assert seg.evaluate(t)[0] == pytest.approx(10 * t**3 - 15 * t**4 + 6 * t**5, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(finite, finite, st.floats(-3, 3), st.floats(0.1, 20))
def test_midpoint_symmetry_and_monotone(q0, qf, t0, T):
    seg = plan_quintic(q0, qf, 0, 0, 0, 0, t0, t0 + T)
    assert seg.evaluate(t0 + T / 2)[0] == pytest.approx((q0 + qf) / 2, abs=1e-12 * (1 + abs(q0) + abs(qf)))
    pos = np.array([seg.evaluate(t)[0] for t in np.linspace(t0, t0 + T, 201)])
    steps = np.diff(pos) * np.sign(qf - q0)
    assert np.all(steps >= -1e-12 * (1 + abs(q0) + abs(qf)))


def test_constant_when_endpoints_equal():
    seg = plan_quintic(0.7, 0.7, 0, 0, 0, 0, 1.0, 4.0)
    np.testing.assert_allclose(seg.coeffs, [0.7, 0, 0, 0, 0, 0], atol=1e-15)


@pytest.mark.parametrize("T", [0.0, 1e-7, -1.0, float("nan")])
def test_degenerate_window(T):
    with pytest.raises(DegenerateWindow):
        plan_quintic(0, 1, 0, 0, 0, 0, 2.0, 2.0 + T)


def test_finite_difference_rates(rng):
    h = 1e-6
    for _ in range(20):
        q0, qf, v0, vf, a0, af = rng.uniform(-2, 2, 6)
        seg = plan_quintic(q0, qf, v0, vf, a0, af, 0.0, 2.0)
        for t in rng.uniform(0.01, 1.99, 10):
            p, v, a = seg.evaluate(t)
            assert (seg.evaluate(t + h)[0] - seg.evaluate(t - h)[0]) / (2 * h) == pytest.approx(v, abs=1e-6)
            assert (seg.evaluate(t + h)[1] - seg.evaluate(t - h)[1]) / (2 * h) == pytest.approx(a, abs=1e-6)


def _two_leg_plan():
    wps = np.array([[0, 0, 1, 0, 1.5, 0], [0.5, -0.2, 1.3, 0.4, 1.2, 0.3], [1.0, 0.1, 0.8, -0.2, 1.7, -0.5]])
    return wps, rest_to_rest_plan(wps, [(1.0, 4.0), (6.0, 9.0)])


def test_hold_semantics_and_continuity():
    wps, plan = _two_leg_plan()
    pos, vel, acc = evaluate(plan, 0.5)
    np.testing.assert_array_equal(pos, wps[0])
    assert not vel.any() and not acc.any()
    pos, vel, acc = evaluate(plan, 5.0)
    np.testing.assert_allclose(pos, wps[1], atol=1e-12)
    assert not vel.any() and not acc.any()
    np.testing.assert_allclose(evaluate(plan, 20.0)[0], wps[2], atol=1e-12)
    np.testing.assert_allclose(plan.final(), wps[2], atol=1e-12)
    for tb in (1.0, 4.0, 6.0, 9.0):
        left = evaluate(plan, np.nextafter(tb, -np.inf))
        right = evaluate(plan, np.nextafter(tb, np.inf))
        np.testing.assert_allclose(left[0], right[0], atol=1e-12)
        np.testing.assert_allclose(left[1], right[1], atol=1e-12)
    assert plan.windows() == [(1.0, 4.0), (6.0, 9.0)]


def test_sample_matches_evaluate():
    _, plan = _two_leg_plan()
    ts = np.linspace(-1, 11, 1201)
    pos, vel, acc = sample(plan, ts)
    for k in range(0, ts.size, 7):
        p, v, a = evaluate(plan, ts[k])
        np.testing.assert_allclose(pos[k], p, atol=1e-14)
        np.testing.assert_allclose(vel[k], v, atol=1e-14)
        np.testing.assert_allclose(acc[k], a, atol=1e-14)


def test_constant_plan():
    plan = TrajectoryPlan.constant([1, 2, 3, 4, 5, 6])
    pos, vel, acc = evaluate(plan, 3.3)
    np.testing.assert_array_equal(pos, [1, 2, 3, 4, 5, 6])
    assert not vel.any()


def test_overlapping_segments_rejected():
    a = plan_quintic(0, 1, 0, 0, 0, 0, 0, 2)
    b = plan_quintic(1, 2, 0, 0, 0, 0, 1, 3)
    with pytest.raises(ValueError):
        TrajectoryPlan(np.zeros(6), [[a, b]] + [[] for _ in range(5)])
