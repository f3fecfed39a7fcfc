import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnrd.analytics import poisson_mean_count
from pnrd.calibration import (
    CalibrationPoint,
    CalibrationRun,
    InsufficientDataError,
    ModelMismatchError,
    NonQuantumDataError,
    SaturationNotReachedError,
    analytic_run,
    calibrate_tmc_nonlinear,
    calibrate_twb_linear,
    detect_saturation,
    generate_synthetic_run,
    infer_detected_mean,
    infer_mean_photons,
    linear_regime_bound,
    regime_value,
)
from pnrd.povm import DetectorModel
from pnrd.special import DomainError
from pnrd.states import SourceKind


def point(i, m1, m2, nrf, nbar=1.0, se=1e-3, trials=10**6):
    return CalibrationPoint(i, nbar, m1, se, m2, se, nrf * (m1 + m2), se, nrf, se, trials)


def plateau_run(kind, means1, means2, nrfs=None):
    nrfs = nrfs or [1.0] * len(means1)
    pts = [point(i, a, b, r, nbar=float(i + 1)) for i, (a, b, r) in enumerate(zip(means1, means2, nrfs))]
    return CalibrationRun(SourceKind(kind), tuple(pts))


# --- linear-regime bound ---------------------------------------------------


def test_bound_examples():
    assert linear_regime_bound(DetectorModel(0.33, 1), 0.1) == pytest.approx(0.2 / 0.33, rel=1e-12)
    assert round(linear_regime_bound(DetectorModel(0.33, 1), 0.1), 3) == 0.606
    b10 = linear_regime_bound(DetectorModel(0.85, 10), 0.1)
    assert round(b10, 1) == 5.4
    assert b10 / linear_regime_bound(DetectorModel(0.33, 1), 0.1) == pytest.approx(8.9, abs=0.1)


def test_bound_is_the_equality_point():
    det = DetectorModel(0.6, 4)
    b = linear_regime_bound(det, 0.05)
    assert regime_value(det.efficiency * b, det.max_count) == pytest.approx(0.05, rel=1e-12)


def test_bound_errors_and_limit():
    with pytest.raises(DomainError):
        linear_regime_bound(DetectorModel(0.0, 3), 0.1)
    with pytest.raises(DomainError):
        linear_regime_bound(DetectorModel(0.5, 3), 1.5)
    assert linear_regime_bound(DetectorModel(0.5, 3), 1e-300) < 1e-90


@given(eta=st.floats(0.01, 0.99), N=st.integers(1, 30), thr=st.floats(1e-6, 0.9))
def test_bound_monotone(eta, N, thr):
    b = linear_regime_bound(DetectorModel(eta, N), thr)
    assert linear_regime_bound(DetectorModel(min(1.0, eta * 1.01), N), thr) < b
    assert linear_regime_bound(DetectorModel(eta, N + 1), thr) > b


# --- inversion of the saturation curve --------------------------------------


@given(y=st.floats(0.0, 60.0), N=st.integers(1, 15))
def test_infer_detected_mean_inverts(y, N):
    m = poisson_mean_count(DetectorModel(1.0, N), y)
    if m >= N - 1e-9:
        return
    y_hat = infer_detected_mean(m, N)
    assert poisson_mean_count(DetectorModel(1.0, N), y_hat) == pytest.approx(m, abs=1e-10)


def test_infer_mean_photons():
    det = DetectorModel(0.4, 3)
    m = poisson_mean_count(det, 5.0)
    assert infer_mean_photons(det, m) == pytest.approx(5.0, rel=1e-9)
    with pytest.raises(DomainError):
        infer_detected_mean(3.0, 3)
    with pytest.raises(DomainError):
        infer_mean_photons(DetectorModel(0.0, 3), 0.5)


# --- saturation detection ---------------------------------------------------


def test_detect_saturation_analytic_plateau():
    det = DetectorModel(0.5, 3)
    run = analytic_run("tmc", det, det, [1.0, 40.0, 50.0])
    assert detect_saturation(run) == (3, 3)


def test_detect_saturation_rounding():
    run = plateau_run("tmc", [1.0, 2.9996, 3.0001], [1.0, 4.999, 5.0])
    assert detect_saturation(run) == (3, 5)


def test_detect_saturation_linear_grid_fails():
    det = DetectorModel(0.5, 3)
    run = analytic_run("tmc", det, det, [0.1, 0.2, 0.4])
    with pytest.raises(SaturationNotReachedError) as err:
        detect_saturation(run)
    assert err.value.exit_code == 4


def test_run_invariants():
    with pytest.raises(DomainError):
        CalibrationRun(SourceKind.TWB, (point(0, 1, 1, 0.5), point(1, 1, 1, 0.5)))
    with pytest.raises(DomainError):
        CalibrationRun(SourceKind.TWB, tuple(point(i, 1, 1, 0.5, trials=999) for i in range(3)))


# --- synthetic runs ---------------------------------------------------------


def test_synthetic_run_linear_counts():
    d1, d2 = DetectorModel(0.6, 3), DetectorModel(0.4, 3)
    run = generate_synthetic_run("twb", d1, d2, [0.001, 0.002, 0.004], 200_000, seed=5)
    p = run.points[0]
    assert abs(p.mean_count1 - 0.6 * 0.001) < 5 * p.se_mean_count1
    assert abs(p.mean_count2 - 0.4 * 0.001) < 5 * p.se_mean_count2
    assert run.truth.eta1 == 0.6 and run.truth.nbars == (0.001, 0.002, 0.004)


def test_synthetic_run_symmetry_and_blind_mode():
    det = DetectorModel(0.5, 4)
    run = generate_synthetic_run("tmc", det, det, [0.5, 2.0, 8.0], 100_000, seed=1, blind=True)
    for p in run.points:
        assert abs(p.mean_count1 - p.mean_count2) < 5 * math.hypot(p.se_mean_count1, p.se_mean_count2)
        assert math.isnan(p.nbar)
    again = generate_synthetic_run("tmc", det, det, [0.5, 2.0, 8.0], 100_000, seed=1, blind=True)
    assert [p.vdp for p in run.points] == [p.vdp for p in again.points]


def test_twb_nrf_leaves_linear_plateau_with_saturation():
    # matched arms clip together and the NRF drops; mismatched arms clip apart and it rises
    det = DetectorModel(0.7, 3)
    run = analytic_run("twb", det, det, [0.05, 5.0, 20.0])
    plateau = 1 - 0.7
    assert run.points[0].nrf == pytest.approx(plateau, abs=1e-3)
    assert run.points[1].nrf < plateau - 0.1
    run = generate_synthetic_run("twb", DetectorModel(0.7, 2), DetectorModel(0.7, 10), [0.05, 5.0, 10.0], 100_000, seed=2)
    assert run.points[0].nrf == pytest.approx(plateau, abs=5 * run.points[0].se_nrf)
    assert run.points[1].nrf > plateau + 0.2


def test_synthetic_grid_must_increase():
    det = DetectorModel(0.5, 3)
    with pytest.raises(DomainError):
        generate_synthetic_run("twb", det, det, [1.0, 0.5, 2.0], 1000, seed=0)


# --- protocol 1 -------------------------------------------------------------


@pytest.mark.parametrize("eta1, eta2", [(0.6, 0.4), (0.85, 0.85), (0.3, 0.95), (1.0, 1.0)])
def test_linear_protocol_inverts_ideal_data(eta1, eta2):
    # ideal linear-regime records: count ratio k and NRF = 1 - 2 eta1 eta2/(eta1 + eta2)
    nrf = 1 - 2 * eta1 * eta2 / (eta1 + eta2)
    pts = tuple(point(i, eta1 * nb, eta2 * nb, nrf, nbar=nb) for i, nb in enumerate([0.01, 0.02, 0.05]))
    res = calibrate_twb_linear(CalibrationRun(SourceKind.TWB, pts))
    assert res.eta1 == pytest.approx(eta1, abs=1e-10)
    assert res.eta2 == pytest.approx(eta2, abs=1e-10)
    assert res.k_ratio == pytest.approx(eta1 / eta2, abs=1e-10)
    assert res.method == "twb_linear"


def test_linear_protocol_noiseless_analytic():
    d1, d2 = DetectorModel(0.6, 10), DetectorModel(0.4, 10)
    # the saturated point is screened out by the regime filter
    run = analytic_run("twb", d1, d2, [0.01, 0.02, 200.0])
    res = calibrate_twb_linear(run)
    assert res.points_used == (0, 1)
    assert res.eta1 == pytest.approx(0.6, abs=1e-4)
    assert res.eta2 == pytest.approx(0.4, abs=1e-4)
    assert res.se_eta1 > 0 and res.se_eta2 > 0


def test_linear_protocol_symmetric_reduction():
    det = DetectorModel(0.7, 5)
    res = calibrate_twb_linear(analytic_run("twb", det, det, [0.01, 0.02, 0.04]))
    assert res.k_ratio == pytest.approx(1.0, abs=1e-12)
    nrf_bar = res.eta1  # eta = 1 - NRF when k = 1
    assert res.eta1 == res.eta2
    assert nrf_bar == pytest.approx(0.7, abs=1e-3)


def test_linear_protocol_monte_carlo():
    d1, d2 = DetectorModel(0.6, 10), DetectorModel(0.4, 10)
    run = generate_synthetic_run("twb", d1, d2, [0.1, 0.2, 0.5, 1.0, 2.0], 10**6, seed=7)
    res = calibrate_twb_linear(run)
    assert abs(res.eta1 - 0.6) < 0.02 and abs(res.eta2 - 0.4) < 0.02
    assert abs(res.eta1 - 0.6) < 5 * res.se_eta1


def test_linear_protocol_errors():
    det = DetectorModel(0.5, 2)
    with pytest.raises(InsufficientDataError) as err:
        calibrate_twb_linear(analytic_run("twb", det, det, [30.0, 40.0, 50.0]))
    assert err.value.exit_code == 3
    classical = plateau_run("twb", [0.01, 0.02, 0.03], [0.01, 0.02, 0.03], [1.0, 1.01, 1.0])
    with pytest.raises(NonQuantumDataError):
        calibrate_twb_linear(classical)
    with pytest.raises(DomainError):
        calibrate_twb_linear(analytic_run("tmc", det, det, [0.01, 0.02, 0.03]))


# --- protocol 2 -------------------------------------------------------------

GRID_N3 = [0.5, 1, 2, 4, 8, 16, 32, 64]


def test_nonlinear_protocol_noiseless():
    run = analytic_run("tmc", DetectorModel(0.7, 3), DetectorModel(0.5, 3), GRID_N3, 10**5)
    res = calibrate_tmc_nonlinear(run)
    assert res.eta1 == pytest.approx(0.7, abs=1e-4)
    assert res.eta2 == pytest.approx(0.5, abs=1e-4)
    assert (res.n1_hat, res.n2_hat) == (3, 3)
    assert res.k_ratio == pytest.approx(res.eta1 / res.eta2)
    assert res.fit_residual >= 0 and not res.degenerate


def test_nonlinear_protocol_symmetric_truth():
    det = DetectorModel(0.85, 3)
    res = calibrate_tmc_nonlinear(analytic_run("tmc", det, det, GRID_N3, 10**5))
    assert abs(res.eta1 - res.eta2) < math.hypot(res.se_eta1, res.se_eta2)


def test_nrf_only_fit_cannot_tell_arms_apart():
    # with equal saturation counts the NRF is symmetric under swapping the arms
    run = analytic_run("tmc", DetectorModel(0.7, 3), DetectorModel(0.5, 3), GRID_N3, 10**5)
    res = calibrate_tmc_nonlinear(run, objective="nrf")
    assert res.degenerate
    assert {round(a[1], 4) for a in res.alternatives} == {0.7, 0.5}


def test_inferred_photon_number_fixes_only_the_ratio():
    run = analytic_run("tmc", DetectorModel(0.7, 3), DetectorModel(0.5, 3), GRID_N3, 10**5)
    res = calibrate_tmc_nonlinear(run, nbar_mode="infer")
    assert res.degenerate
    assert res.k_ratio == pytest.approx(1.4, abs=1e-3)


def test_nonlinear_protocol_monte_carlo():
    run = generate_synthetic_run("tmc", DetectorModel(0.7, 3), DetectorModel(0.5, 3), GRID_N3, 10**5, seed=3)
    res = calibrate_tmc_nonlinear(run)
    assert abs(res.eta1 - 0.7) < 0.02 and abs(res.eta2 - 0.5) < 0.02


def test_nonlinear_protocol_errors():
    d1, d2 = DetectorModel(0.7, 3), DetectorModel(0.5, 3)
    with pytest.raises(SaturationNotReachedError):
        calibrate_tmc_nonlinear(analytic_run("tmc", d1, d2, [0.5, 1.0, 2.0]))
    # twin-beam data put through the coherent-light model do not fit
    with pytest.raises(ModelMismatchError) as err:
        calibrate_tmc_nonlinear(CalibrationRun(SourceKind.TMC, analytic_run("twb", d1, d2, GRID_N3, 10**5).points))
    assert err.value.exit_code == 5
    blind = generate_synthetic_run("tmc", d1, d2, GRID_N3, 2000, seed=0, blind=True)
    with pytest.raises(InsufficientDataError):
        calibrate_tmc_nonlinear(blind)
    with pytest.raises(DomainError):
        calibrate_tmc_nonlinear(analytic_run("twb", d1, d2, GRID_N3), nbar_mode="reference")
    with pytest.raises(DomainError):
        calibrate_tmc_nonlinear(analytic_run("tmc", d1, d2, GRID_N3), nbar_mode="guess")
