"""Absolute efficiency calibration of two photon-number-resolving detectors.

Two protocols run on :class:`CalibrationRun` records:

* ``twb_linear``: twin-beam light in the linear regime. The count ratio gives
  ``k = eta1/eta2`` and the noise reduction factor ``1 - 2 eta1/(1 + k)``
  fixes ``eta1``.
* ``tmc_nonlinear``: coherent light driven into saturation. The plateau gives
  the saturation counts, then the saturating-detector NRF model is fitted to
  the measured NRF curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import analytics
from .montecarlo import SampleStats, SimConfig, expected_sample_stats, simulate_counts
from .povm import DetectorModel
from .special import DomainError
from .states import SourceKind, make_source


class CalibrationError(RuntimeError):
    """Base class for protocol failures."""

    exit_code = 1


class InsufficientDataError(CalibrationError):
    exit_code = 3


class NonQuantumDataError(CalibrationError):
    exit_code = 3


class SaturationNotReachedError(CalibrationError):
    exit_code = 4


class ModelMismatchError(CalibrationError):
    exit_code = 5


@dataclass(frozen=True)
class CalibrationPoint:
    pump_setting: int
    nbar: float  # reference mean photon number; NaN in blind runs
    mean_count1: float
    se_mean_count1: float
    mean_count2: float
    se_mean_count2: float
    vdp: float
    se_vdp: float
    nrf: float
    se_nrf: float
    trials: int

    @classmethod
    def from_stats(cls, index: int, nbar: float, s: SampleStats) -> "CalibrationPoint":
        return cls(
            index, nbar, s.mean1, s.se_mean1, s.mean2, s.se_mean2,
            s.vdp, s.se_vdp, s.nrf, s.se_nrf, s.trials,
        )


@dataclass(frozen=True)
class Truth:
    eta1: float
    eta2: float
    n1: int
    n2: int
    nbars: tuple[float, ...]


@dataclass(frozen=True)
class CalibrationRun:
    """Ordered measurement points at increasing pump power."""

    source_kind: SourceKind
    points: tuple[CalibrationPoint, ...]
    # generating parameters, kept for scoring only; estimators never read this
    truth: Truth | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.points) < 3:
            raise DomainError(f"a calibration run needs >= 3 points, got {len(self.points)}")
        if any(p.trials < 1000 for p in self.points):
            raise DomainError("every calibration point needs >= 1000 trials")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)


@dataclass(frozen=True)
class CalibrationResult:
    method: str
    k_ratio: float
    eta1: float
    eta2: float
    se_eta1: float
    se_eta2: float
    n1_hat: int | None = None
    n2_hat: int | None = None
    fit_residual: float = 0.0
    degenerate: bool = False
    points_used: tuple[int, ...] = ()
    alternatives: tuple[tuple[float, float, float], ...] = ()

    def errors_against(self, truth: Truth) -> tuple[float, float]:
        return abs(self.eta1 - truth.eta1), abs(self.eta2 - truth.eta2)


# --- linear regime ---------------------------------------------------------


def regime_value(detected_mean: float, max_count: int) -> float:
    """``(eta nbar)^N / (N+1)!``: size of the first saturation correction."""
    if detected_mean <= 0:
        return 0.0
    return math.exp(max_count * math.log(detected_mean) - math.lgamma(max_count + 2))


def linear_regime_bound(det: DetectorModel, threshold: float = 0.1) -> float:
    """Largest mean photon number with ``(eta nbar)^N / (N+1)! <= threshold``."""
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    if det.efficiency == 0:
        raise DomainError("linear regime is unbounded for a detector with zero efficiency")
    N = det.max_count
    return math.exp((math.log(threshold) + math.lgamma(N + 2)) / N) / det.efficiency


def infer_detected_mean(measured_mean: float, max_count: int, tol: float = 1e-13) -> float:
    """Detected mean ``y = eta nbar`` whose Poisson mean count equals ``measured_mean``.

    Bisection on the monotone saturation curve; the count is matched to
    ``tol`` absolute.
    """
    N = max_count
    if not 0.0 <= measured_mean < N:
        raise DomainError(f"mean count {measured_mean} outside invertible range [0, {N})")
    if measured_mean == 0:
        return 0.0
    ref = DetectorModel(1.0, N)

    def count(y: float) -> float:
        return analytics.poisson_mean_count(ref, y)

    lo, hi = measured_mean, 2.0 * measured_mean + 1.0
    while count(hi) < measured_mean:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError(f"mean count {measured_mean} too close to saturation to invert")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = count(mid)
        if abs(c - measured_mean) <= tol:
            return mid
        if c < measured_mean:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


def infer_mean_photons(det: DetectorModel, measured_mean: float) -> float:
    """Mean photon number for which ``det`` shows ``measured_mean`` counts on Poisson light."""
    if det.efficiency == 0:
        raise DomainError("cannot infer photon number through a zero-efficiency detector")
    return infer_detected_mean(measured_mean, det.max_count) / det.efficiency


# --- synthetic data --------------------------------------------------------


def _point_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def _check_grid(mean_grid) -> list[float]:
    grid = [float(g) for g in mean_grid]
    if any(g <= 0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("mean grid must be positive and strictly increasing")
    return grid


def generate_synthetic_run(
    source_kind,
    true_det1: DetectorModel,
    true_det2: DetectorModel,
    mean_grid,
    trials: int,
    seed: int,
    workers: int = 1,
    blind: bool = False,
) -> CalibrationRun:
    """Monte Carlo measurement of every grid point (one independent stream each)."""
    kind = SourceKind(source_kind)
    grid = _check_grid(mean_grid)
    points = []
    for i, (nbar, point_seed) in enumerate(zip(grid, _point_seeds(seed, len(grid)))):
        source = make_source(kind, nbar, max(true_det1.max_count, true_det2.max_count))
        s = simulate_counts(source, true_det1, true_det2, SimConfig(point_seed, trials, workers))
        points.append(CalibrationPoint.from_stats(i, math.nan if blind else nbar, s))
    truth = Truth(true_det1.efficiency, true_det2.efficiency, true_det1.max_count, true_det2.max_count, tuple(grid))
    return CalibrationRun(kind, tuple(points), truth)


def analytic_run(
    source_kind,
    true_det1: DetectorModel,
    true_det2: DetectorModel,
    mean_grid,
    trials: int = 1_000_000,
) -> CalibrationRun:
    """Noise-free run: exact expectations, standard errors of a ``trials``-trial run."""
    kind = SourceKind(source_kind)
    grid = _check_grid(mean_grid)
    points = []
    for i, nbar in enumerate(grid):
        source = make_source(kind, nbar, max(true_det1.max_count, true_det2.max_count))
        joint = analytics.joint_count_distribution(source, true_det1, true_det2)
        points.append(CalibrationPoint.from_stats(i, nbar, expected_sample_stats(joint, trials)))
    truth = Truth(true_det1.efficiency, true_det2.efficiency, true_det1.max_count, true_det2.max_count, tuple(grid))
    return CalibrationRun(kind, tuple(points), truth)


# --- protocol 1: twin beam, linear regime ----------------------------------


def detect_saturation(run: CalibrationRun, flat_tolerance: float = 1e-3) -> tuple[int, int]:
    """Saturation counts from the plateau of the last two points (nearest integers)."""
    if len(run.points) < 2:
        raise SaturationNotReachedError("need at least two points to see a plateau")
    prev, last = run.points[-2], run.points[-1]
    for arm, (a, b) in enumerate(
        [(prev.mean_count1, last.mean_count1), (prev.mean_count2, last.mean_count2)], start=1
    ):
        if b <= 0 or abs(b - a) / b >= flat_tolerance:
            raise SaturationNotReachedError(
                f"arm {arm} mean count still changing ({a:.6g} -> {b:.6g}); extend the grid"
            )
    n1, n2 = round(last.mean_count1), round(last.mean_count2)
    if n1 < 1 or n2 < 1:
        raise SaturationNotReachedError("plateau below one count")
    return n1, n2


def _plateau_lower_bounds(run: CalibrationRun) -> tuple[int, int]:
    try:
        return detect_saturation(run)
    except SaturationNotReachedError:
        # an unsaturated detector resolves at least the largest mean seen
        m1 = run.column("mean_count1").max()
        m2 = run.column("mean_count2").max()
        return max(1, math.ceil(m1)), max(1, math.ceil(m2))


def _weighted_mean(values: np.ndarray, se: np.ndarray) -> tuple[float, float]:
    w = np.where(se > 0, 1.0 / np.where(se > 0, se, 1.0) ** 2, 0.0)
    if not w.any():
        return float(values.mean()), math.nan
    return float(np.dot(w, values) / w.sum()), float(1.0 / math.sqrt(w.sum()))


def _linear_estimates(points) -> tuple[float, float, float, float]:
    m1 = np.array([p.mean_count1 for p in points])
    m2 = np.array([p.mean_count2 for p in points])
    se1 = np.array([p.se_mean_count1 for p in points])
    se2 = np.array([p.se_mean_count2 for p in points])
    ratio = m1 / m2
    se_ratio = ratio * np.sqrt((se1 / m1) ** 2 + (se2 / m2) ** 2)
    k, se_k = _weighted_mean(ratio, se_ratio)
    nrf_bar, se_nrf = _weighted_mean(
        np.array([p.nrf for p in points]), np.array([p.se_nrf for p in points])
    )
    return k, se_k, nrf_bar, se_nrf


def calibrate_twb_linear(run: CalibrationRun, regime_filter: float = 0.1) -> CalibrationResult:
    """Twin-beam calibration from points inside the linear regime.

    Points are kept when ``y^N/(N+1)!`` stays below ``regime_filter`` in both
    arms, with ``N`` the plateau estimate (a lower bound when the run never
    saturates). Pass one takes ``y`` as the measured mean count; pass two
    re-screens the survivors with ``y`` from inverting the saturation curve.
    """
    if SourceKind(run.source_kind) is SourceKind.TMC:
        raise DomainError("the linear protocol needs twin-beam data")
    n1, n2 = _plateau_lower_bounds(run)

    def crude(p: CalibrationPoint) -> bool:
        return (
            p.mean_count1 > 0 and p.mean_count2 > 0
            and regime_value(p.mean_count1, n1) < regime_filter
            and regime_value(p.mean_count2, n2) < regime_filter
        )

    def refined(p: CalibrationPoint) -> bool:
        try:
            y1 = infer_detected_mean(p.mean_count1, n1)
            y2 = infer_detected_mean(p.mean_count2, n2)
        except DomainError:
            return False
        return regime_value(y1, n1) < regime_filter and regime_value(y2, n2) < regime_filter

    selected = [p for p in run.points if crude(p)]
    selected = [p for p in selected if refined(p)]
    if len(selected) < 2:
        raise InsufficientDataError(
            f"{len(selected)} point(s) inside the linear regime (threshold {regime_filter}); need 2"
        )
    k, se_k, nrf_bar, se_nrf = _linear_estimates(selected)
    if nrf_bar >= 1.0:
        raise NonQuantumDataError(
            f"mean NRF {nrf_bar:.4f} >= 1: data show no photon-number correlation"
        )
    eta1 = (1.0 - nrf_bar) * (1.0 + k) / 2.0
    eta2 = eta1 / k
    se_eta1 = math.hypot((1.0 + k) / 2.0 * se_nrf, (1.0 - nrf_bar) / 2.0 * se_k)
    se_eta2 = math.hypot(se_eta1 / k, eta1 / k**2 * se_k) if math.isfinite(se_eta1) else math.nan
    return CalibrationResult(
        method="twb_linear",
        k_ratio=k,
        eta1=eta1,
        eta2=eta2,
        se_eta1=se_eta1,
        se_eta2=se_eta2,
        points_used=tuple(p.pump_setting for p in selected),
    )


# --- protocol 2: coherent light, nonlinear fit -----------------------------

START_LATTICE = tuple((a, b) for a in (0.2, 0.5, 0.8) for b in (0.2, 0.5, 0.8) if (a, b) != (0.5, 0.5))
SIMPLEX_XATOL = 1e-8
DISTINCT_MINIMA = 1e-2
RESIDUAL_REL_TOL = 0.01


def _tmc_model(eta1: float, eta2: float, n1: int, n2: int, nbar: float) -> tuple[float, float, float]:
    m1, _, var1 = analytics.poisson_moments(DetectorModel(eta1, n1), nbar)
    m2, _, var2 = analytics.poisson_moments(DetectorModel(eta2, n2), nbar)
    return m1, m2, (var1 + var2) / (m1 + m2)


def _fit_chi2(theta, data, n1, n2, nbar_of, with_counts: bool) -> float:
    eta1, eta2 = theta
    if not (0.0 < eta1 <= 1.0 and 0.0 < eta2 <= 1.0):
        return math.inf
    chi2 = 0.0
    for p, measured_y1 in data:
        nbar = nbar_of(p, measured_y1, eta1)
        m1, m2, nrf = _tmc_model(eta1, eta2, n1, n2, nbar)
        if p.se_nrf > 0:
            chi2 += ((p.nrf - nrf) / p.se_nrf) ** 2
        if with_counts:
            if p.se_mean_count1 > 0:
                chi2 += ((p.mean_count1 - m1) / p.se_mean_count1) ** 2
            if p.se_mean_count2 > 0:
                chi2 += ((p.mean_count2 - m2) / p.se_mean_count2) ** 2
    return chi2


def _hessian(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.eye(n)[i] * h
            ej = np.eye(n)[j] * h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def calibrate_tmc_nonlinear(
    run: CalibrationRun,
    nbar_mode: str = "reference",
    objective: str = "joint",
    flat_tolerance: float = 1e-3,
) -> CalibrationResult:
    """Fit ``(eta1, eta2)`` to coherent-light data taken through saturation.

    The saturation counts come from the plateau first. ``objective="nrf"``
    fits the measured NRF curve alone; ``"joint"`` adds both arms' mean
    counts to the chi-square, which pins the efficiency difference that the
    NRF only constrains to second order when ``eta1 ~ eta2``.

    ``nbar_mode="reference"`` uses each point's recorded mean photon number
    (the pump-power reference). ``"infer"`` inverts arm 1's saturation curve
    for the current ``eta1`` instead; with no external photon-number scale the
    data then fix only ``eta2/eta1`` and the result is flagged degenerate.

    Eight Nelder-Mead starts on a fixed lattice; minima further apart than
    0.01 with residuals within 1% of the best set ``degenerate``.
    """
    if SourceKind(run.source_kind) is not SourceKind.TMC:
        raise DomainError("the nonlinear protocol needs two-mode coherent data")
    if nbar_mode not in ("reference", "infer"):
        raise DomainError(f"nbar_mode must be 'reference' or 'infer', got {nbar_mode!r}")
    if objective not in ("joint", "nrf"):
        raise DomainError(f"objective must be 'joint' or 'nrf', got {objective!r}")
    n1, n2 = detect_saturation(run, flat_tolerance)

    data = []
    for p in run.points:
        if not (p.se_nrf > 0 and math.isfinite(p.nrf)):
            continue  # degenerate sample (e.g. fully saturated): carries no weight
        if nbar_mode == "reference":
            if not math.isfinite(p.nbar):
                raise InsufficientDataError("reference photon numbers are hidden in this run")
            data.append((p, math.nan))
        elif p.mean_count1 < n1:
            data.append((p, infer_detected_mean(p.mean_count1, n1)))
    if len(data) < 3:
        raise InsufficientDataError(f"only {len(data)} usable points for the nonlinear fit")

    if nbar_mode == "reference":
        def nbar_of(p, _y, _eta1):
            return p.nbar
    else:
        def nbar_of(_p, y, eta1):
            return y / eta1

    with_counts = objective == "joint"

    def chi2(theta) -> float:
        return _fit_chi2(theta, data, n1, n2, nbar_of, with_counts)

    fits = []
    for start in START_LATTICE:
        res = optimize.minimize(
            chi2,
            np.array(start),
            method="Nelder-Mead",
            bounds=[(1e-9, 1.0), (1e-9, 1.0)],
            options={"xatol": SIMPLEX_XATOL, "fatol": 1e-14, "maxiter": 4000},
        )
        fits.append((float(res.fun), float(res.x[0]), float(res.x[1])))
    fits.sort()
    best = fits[0]
    near = [f for f in fits if f[0] <= best[0] * (1 + RESIDUAL_REL_TOL) + 1e-12]
    distinct: list[tuple[float, float, float]] = []
    for f in near:
        if all(math.hypot(f[1] - g[1], f[2] - g[2]) > DISTINCT_MINIMA for g in distinct):
            distinct.append(f)
    degenerate = len(distinct) > 1

    residual, eta1, eta2 = best
    n_terms = len(data) * (3 if with_counts else 1)
    dof = max(n_terms - 2, 1)
    limit = stats.chi2.ppf(0.99, dof)
    if residual > limit:
        raise ModelMismatchError(f"fit residual {residual:.4g} exceeds chi-square 99% limit {limit:.4g}")

    se1 = se2 = math.nan
    try:
        H = _hessian(chi2, np.array([min(eta1, 1 - 2e-5), min(eta2, 1 - 2e-5)]))
        cov = 2.0 * np.linalg.inv(H)
        if cov[0, 0] > 0 and cov[1, 1] > 0:
            se1, se2 = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    except np.linalg.LinAlgError:
        warnings.warn("singular curvature at the fitted point; no uncertainties", RuntimeWarning, stacklevel=2)
    return CalibrationResult(
        method="tmc_nonlinear",
        k_ratio=eta1 / eta2,
        eta1=eta1,
        eta2=eta2,
        se_eta1=se1,
        se_eta2=se2,
        n1_hat=n1,
        n2_hat=n2,
        fit_residual=residual,
        degenerate=degenerate,
        points_used=tuple(p.pump_setting for p, _ in data),
        alternatives=tuple(distinct),
    )
