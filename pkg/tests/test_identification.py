import numpy as np
import pytest

from quadmanip.errors import DegenerateRegressor, InsufficientData
from quadmanip.identification import (
    RotorSampleLog,
    fit_rotor_coefficients,
    read_log_csv,
    synthesize_rotor_log,
    write_log_csv,
)

KF1, KM1 = 1.667e-5, 3.965e-7
GRID = np.arange(100.0, 1000.0, 100.0)


def test_noiseless_fit_is_exact():
    res = fit_rotor_coefficients(synthesize_rotor_log(KF1, KM1, GRID))
    assert res.kF == pytest.approx(KF1, rel=1e-15)
    assert res.kM == pytest.approx(KM1, rel=1e-15)
    assert res.residual_rms_thrust < 1e-15 and res.residual_rms_moment < 1e-17
    assert res.n_samples == 9


def test_thrust_row_value():
    log = synthesize_rotor_log(1.711e-5, 4.404e-7, [500.0])
    assert log.thrust[0] == pytest.approx(4.2775, rel=1e-15)


def test_one_percent_noise():
    speeds = np.linspace(100, 1000, 50)
    res = fit_rotor_coefficients(synthesize_rotor_log(KF1, KM1, speeds, noise=0.01, seed=3))
    assert abs(res.kF / KF1 - 1) < 0.01
    assert abs(res.kM / KM1 - 1) < 0.01
    assert res.residual_rms_thrust > 0


def test_unbiased_over_many_fits():
    speeds = np.linspace(100, 1000, 50)
    ks = [fit_rotor_coefficients(synthesize_rotor_log(KF1, KM1, speeds, 0.01, seed)).kF for seed in range(1000)]
    assert abs(np.mean(ks) / KF1 - 1) < 1e-3


def test_seeded_determinism_and_row_order(rng):
    a = synthesize_rotor_log(KF1, KM1, GRID, 0.05, seed=9)
    b = synthesize_rotor_log(KF1, KM1, GRID, 0.05, seed=9)
    np.testing.assert_array_equal(a.thrust, b.thrust)
    perm = rng.permutation(len(a))
    shuffled = RotorSampleLog(a.omega[perm], a.thrust[perm], a.drag_moment[perm])
    r1, r2 = fit_rotor_coefficients(a), fit_rotor_coefficients(shuffled)
    assert r1.kF == r2.kF and r1.kM == r2.kM


def test_errors():
    with pytest.raises(DegenerateRegressor):
        fit_rotor_coefficients(RotorSampleLog(np.zeros(5), np.zeros(5), np.zeros(5)))
    with pytest.raises(InsufficientData):
        fit_rotor_coefficients(synthesize_rotor_log(KF1, KM1, [100.0, 200.0, 200.0, 100.0]))
    with pytest.raises(ValueError):
        RotorSampleLog([-1.0, 2, 3], [0, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        RotorSampleLog([1.0, 2], [0, 0, 0], [0, 0, 0])


def test_csv_round_trip(tmp_path):
    log = synthesize_rotor_log(KF1, KM1, GRID, 0.02, seed=1, rotor_id=2)
    path = tmp_path / "bench.csv"
    write_log_csv(log, path)
    assert path.read_text().splitlines()[0] == "omega,thrust,drag_moment"
    back = read_log_csv(path, rotor_id=2)
    np.testing.assert_array_equal(back.thrust, log.thrust)
    assert fit_rotor_coefficients(back).as_dict() == fit_rotor_coefficients(log).as_dict()


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("w,f,m\n1,2,3\n")
    with pytest.raises(ValueError):
        read_log_csv(path)
