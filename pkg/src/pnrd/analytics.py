"""Closed-form photocount statistics for Poissonian and twin-beam light.

Moments of a saturating detector under Poisson light only depend on the
detected mean ``y = eta * nbar``. The exponential sums in those formulas are
written through ``exp(-y) e_n(y) = Q(n + 1, y)`` so that neither the linear
nor the saturated end suffers cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .povm import DetectorModel, binomial_loss_matrix, coefficients_C, response_matrix
from .special import DomainError, exp_sum, poisson_cdf, poisson_sf
from .states import (
    NumberDistribution,
    SourceKind,
    TwoModeSource,
    poisson_distribution,
)

__all__ = [
    "CountStatistics",
    "DifferenceDistribution",
    "QOptimum",
    "asymptotic_mean",
    "count_statistics",
    "cross_moment_twb",
    "difference_distribution",
    "exp_sum",
    "joint_count_distribution",
    "nrf",
    "optimize_q",
    "poisson_mean_count",
    "poisson_moments",
    "poisson_second_moment",
    "poisson_variance",
    "q_measure",
    "vdp_tmc",
    "vdp_twb",
]


def _detected_mean(det: DetectorModel, mean: float) -> float:
    if mean < 0 or math.isnan(mean):
        raise DomainError(f"mean photon number must be nonnegative, got {mean}")
    return det.efficiency * mean


def _poisson_pmf(k: int, y: float) -> float:
    if k < 0:
        return 0.0
    return math.exp(-y + k * math.log(y) - math.lgamma(k + 1))


def poisson_moments(det: DetectorModel, mean: float) -> tuple[float, float, float]:
    """``(<m>, <m^2>, variance)`` of the photocount for Poisson light.

    With ``y = eta * nbar`` the closed forms read
    ``<m> = N - [N e_{N-1}(y) - y e_{N-2}(y)] e^{-y}`` and
    ``<m^2> = N^2 - y^N (N + y) e^{-y} / Gamma(N) + [y^2 + y - N^2] e^{-y} e_{N-1}(y)``;
    they are evaluated as ``<m> = N P(N, y) + y Q(N-1, y)`` and
    ``<m^2> = N^2 P(N, y) + y Q(N-1, y) + y^2 Q(N-2, y)``. Near saturation
    the variance comes from the moments of the small deficit ``N - m``.
    """
    y = _detected_mean(det, mean)
    N = det.max_count
    if y == 0:
        return 0.0, 0.0, 0.0
    # Poisson CDF values e^{-y} e_k(y) for k = N-3, N-2, N-1, built upward
    cdf3 = poisson_cdf(N - 3, y)
    cdf2 = cdf3 + _poisson_pmf(N - 2, y)
    cdf1 = cdf2 + _poisson_pmf(N - 1, y)
    sat = poisson_sf(N - 1, y)
    m1 = N * sat + y * cdf2
    m2 = N * N * sat + y * cdf2 + y * y * cdf3
    if y < N:
        var = m2 - m1 * m1
    else:
        deficit = N * cdf1 - y * cdf2
        deficit_sq = N * N * cdf1 - 2 * N * y * cdf2 + y * y * cdf3 + y * cdf2
        var = deficit_sq - deficit * deficit
    return m1, m2, max(var, 0.0)


def poisson_mean_count(det: DetectorModel, mean: float) -> float:
    """Mean photocount ``<m>`` for Poisson light of mean ``mean``."""
    return poisson_moments(det, mean)[0]


def poisson_second_moment(det: DetectorModel, mean: float) -> float:
    """Second photocount moment ``<m^2>`` for Poisson light."""
    return poisson_moments(det, mean)[1]


def poisson_variance(det: DetectorModel, mean: float) -> float:
    """Photocount variance for Poisson light."""
    return poisson_moments(det, mean)[2]


def asymptotic_mean(det: DetectorModel, mean: float, regime: str) -> float:
    """Leading asymptotic form of :func:`poisson_mean_count`.

    ``large``: ``N - e^{-y} y^{N-1}/(N-1)!``; ``small``: ``y - y^{N+1}/(N+1)!``.
    Validation reference only.
    """
    y = _detected_mean(det, mean)
    N = det.max_count
    if regime == "large":
        if y == 0:
            return 0.0
        return N - math.exp(-y + (N - 1) * math.log(y) - math.lgamma(N))
    if regime == "small":
        if y == 0:
            return 0.0
        return y - math.exp((N + 1) * math.log(y) - math.lgamma(N + 2))
    raise DomainError(f"regime must be 'large' or 'small', got {regime!r}")


def vdp_tmc(det1: DetectorModel, det2: DetectorModel, mean: float) -> float:
    """Variance of the count difference for a two-mode coherent state."""
    return poisson_variance(det1, mean) + poisson_variance(det2, mean)


def cross_moment_twb(det1: DetectorModel, det2: DetectorModel, weights: NumberDistribution) -> float:
    """``<m1 m2>`` for a diagonal (twin-beam type) state with weights ``|b_n|^2``.

    Sum of the four saturation terms; every sum runs from ``n = 0`` and relies
    on ``C_n = 0`` for ``n <= N``.
    """
    p_all = np.asarray(weights.probs)
    # weights below 1e-30 of the peak cannot reach the 1e-10 absolute target
    keep = np.flatnonzero(p_all > 1e-30 * p_all.max())
    p = p_all[keep]
    n_max = int(keep[-1])
    n = keep.astype(float)
    c1 = coefficients_C(n_max, det1, keep)
    c2 = coefficients_C(n_max, det2, keep)
    eta1, eta2 = det1.efficiency, det2.efficiency
    lossy = eta1 * eta2 * np.dot(p, n * n)
    sat2 = eta1 * np.dot(p, n * c2)
    sat1 = eta2 * np.dot(p, n * c1)
    both = np.dot(p, c1 * c2)
    return float(lossy - sat2 - sat1 + both)


def _twb_weights(det1: DetectorModel, det2: DetectorModel, mean: float) -> NumberDistribution:
    return poisson_distribution(mean, max(det1.max_count, det2.max_count))


def _conditional_deficit(det: DetectorModel, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the deficit ``N - m`` given ``n`` incident photons."""
    N = det.max_count
    m = np.arange(N)
    w = binomial_loss_matrix(m, n, det.efficiency)
    gap = (N - m).astype(float)
    u = gap @ w
    return u, np.maximum(gap**2 @ w - u * u, 0.0)


def vdp_twb(det1: DetectorModel, det2: DetectorModel, mean: float) -> float:
    """Variance of the count difference for a multimode twin beam.

    Evaluated as ``E_n[Var(m1|n) + Var(m2|n)] + Var_n(<m1>_n - <m2>_n)``,
    which equals the moment expression built from :func:`cross_moment_twb`
    but has no cancellation once both arms saturate.
    """
    if mean == 0:
        return 0.0
    p_all = np.asarray(_twb_weights(det1, det2, mean).probs)
    keep = np.flatnonzero(p_all > 1e-30 * p_all.max())
    p = p_all[keep] / p_all[keep].sum()
    n = keep.astype(float)
    u1, v1 = _conditional_deficit(det1, n)
    u2, v2 = _conditional_deficit(det2, n)
    gap = u2 - u1
    spread = gap - np.dot(p, gap)
    return float(np.dot(p, v1 + v2) + np.dot(p, spread * spread))


def nrf(source_kind, det1: DetectorModel, det2: DetectorModel, mean: float) -> float:
    """Noise reduction factor: difference variance over summed mean counts."""
    kind = SourceKind(source_kind)
    if mean <= 0:
        raise DomainError(f"NRF needs a positive mean photon number, got {mean}")
    total = poisson_mean_count(det1, mean) + poisson_mean_count(det2, mean)
    if total == 0:
        raise DomainError("NRF undefined: both detectors have zero mean count")
    if kind is SourceKind.TMC:
        return vdp_tmc(det1, det2, mean) / total
    if kind is SourceKind.TWB:
        return vdp_twb(det1, det2, mean) / total
    raise DomainError(f"closed-form NRF only for TMC/TWB sources, got {kind.value}")


def q_measure(det1: DetectorModel, det2: DetectorModel, mean: float) -> float:
    """``vdp_tmc - vdp_twb`` at identical detectors and mean photon number."""
    return vdp_tmc(det1, det2, mean) - vdp_twb(det1, det2, mean)


@dataclass(frozen=True)
class CountStatistics:
    mean1: float
    mean2: float
    second1: float
    second2: float
    cross: float
    vdp: float
    nrf: float
    source_kind: SourceKind


def count_statistics(source_kind, det1: DetectorModel, det2: DetectorModel, mean: float) -> CountStatistics:
    """All closed-form joint statistics of a TMC or TWB source."""
    kind = SourceKind(source_kind)
    m1 = poisson_mean_count(det1, mean)
    m2 = poisson_mean_count(det2, mean)
    s1 = poisson_second_moment(det1, mean)
    s2 = poisson_second_moment(det2, mean)
    if kind is SourceKind.TMC:
        cross = m1 * m2
        vdp = vdp_tmc(det1, det2, mean)
    elif kind is SourceKind.TWB:
        cross = cross_moment_twb(det1, det2, _twb_weights(det1, det2, mean))
        vdp = vdp_twb(det1, det2, mean)
    else:
        raise DomainError(f"closed forms only for TMC/TWB sources, got {kind.value}")
    ratio = vdp / (m1 + m2) if m1 + m2 > 0 else math.nan
    return CountStatistics(m1, m2, s1, s2, cross, vdp, ratio, kind)


def joint_count_distribution(source: TwoModeSource, det1: DetectorModel, det2: DetectorModel) -> np.ndarray:
    """Joint photocount probabilities ``P[m1, m2]``."""
    p = np.asarray(source.weights.probs)
    n_max = len(p) - 1
    r1 = response_matrix(det1, n_max)
    r2 = response_matrix(det2, n_max)
    if source.kind is SourceKind.TMC:
        return np.outer(r1 @ p, r2 @ p)
    return (r1 * p) @ r2.T


@dataclass(frozen=True)
class DifferenceDistribution:
    """Distribution of ``d = m1 - m2`` on ``d = -N2..N1``."""

    support: np.ndarray
    probs: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(d): float(p) for d, p in zip(self.support, self.probs)}

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self.support - mu) ** 2, self.probs))


def difference_distribution(source: TwoModeSource, det1: DetectorModel, det2: DetectorModel) -> DifferenceDistribution:
    """Collapse the joint count distribution onto ``d = m1 - m2``."""
    joint = joint_count_distribution(source, det1, det2)
    support = np.arange(-det2.max_count, det1.max_count + 1)
    probs = np.array([np.trace(joint, offset=-d) for d in support])
    return DifferenceDistribution(support, probs)


class QOptimum(NamedTuple):
    argmax: float
    max_value: float
    multimodal: bool


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo: float, hi: float, to_x, tol: float) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(to_x(c)), f(to_x(d))
    while abs(to_x(b) - to_x(a)) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(to_x(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(to_x(d))
    t = 0.5 * (a + b)
    return to_x(t), f(to_x(t))


def optimize_q(
    det_template: DetectorModel,
    vary: str,
    fixed_value: float,
    search_interval: tuple[float, float],
    points: int = 128,
    tol: float = 1e-6,
) -> QOptimum:
    """Maximize Q for a balanced pair of detectors.

    ``vary="mean"`` scans the mean photon number with the efficiency held at
    ``fixed_value``; ``vary="efficiency"`` scans the efficiency at mean photon
    number ``fixed_value``. Both arms share ``det_template.max_count``.
    A 128-point grid brackets the maximum, golden-section search refines it.
    """
    lo, hi = map(float, search_interval)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi <= lo:
        raise DomainError(f"degenerate search interval {search_interval}")
    N = det_template.max_count
    if vary == "mean":
        det = DetectorModel(fixed_value, N)

        def f(x: float) -> float:
            return q_measure(det, det, x)

        log_scale = lo > 0
    elif vary == "efficiency":
        if hi > 1:
            raise DomainError("efficiency interval must lie within [0, 1]")

        def f(x: float) -> float:
            d = DetectorModel(min(max(x, 0.0), 1.0), N)
            return q_measure(d, d, fixed_value)

        log_scale = False
    else:
        raise DomainError(f"vary must be 'mean' or 'efficiency', got {vary!r}")

    if log_scale:
        t_lo, t_hi = math.log(lo), math.log(hi)
        to_x = math.exp
    else:
        t_lo, t_hi = lo, hi

        def to_x(t: float) -> float:
            return t

    grid = np.linspace(t_lo, t_hi, points)
    values = np.array([f(to_x(t)) for t in grid])
    best = int(np.argmax(values))
    floor = 1e-8 * max(abs(values).max(), 1e-300)
    peaks = 0
    for i in range(points):
        rising = i == 0 or values[i] > values[i - 1]
        falling = i == points - 1 or values[i] >= values[i + 1]
        if rising and falling and values[i] > floor:
            peaks += 1
    if values[best] <= 0:
        return QOptimum(to_x(grid[best]), float(values[best]), False)
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, points - 1)]
    x, fx = _golden_max(f, a, b, to_x, tol)
    if fx < values[best]:
        x, fx = to_x(grid[best]), float(values[best])
    return QOptimum(float(x), float(fx), peaks > 1)
