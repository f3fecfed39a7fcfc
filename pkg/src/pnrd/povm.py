"""POVM of a lossy photon-number-resolving detector that saturates at N counts.

Outcome ``m < N`` has Fock-diagonal elements ``w_{m,n}``, the binomial
probability of registering ``m`` of ``n`` photons. The last outcome collects
everything else: ``Pi_N = I - sum_{m<N} Pi_m``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .special import DomainError, terminating_hypergeometric

NORMALIZATION_TOL = 1e-9
NEGATIVE_ROUNDOFF_TOL = 1e-12


class ValidationError(ValueError):
    """Input data violates a contract (e.g. an unnormalized distribution)."""


def _check_efficiency(efficiency: float) -> None:
    if not 0.0 <= efficiency <= 1.0 or math.isnan(efficiency):
        raise DomainError(f"efficiency must lie in [0, 1], got {efficiency}")


@dataclass(frozen=True)
class DetectorModel:
    """Quantum efficiency and maximum resolvable photocount of one detector."""

    efficiency: float
    max_count: int

    def __post_init__(self) -> None:
        _check_efficiency(self.efficiency)
        if int(self.max_count) != self.max_count or self.max_count < 1:
            raise DomainError(f"max_count must be a positive integer, got {self.max_count}")
        object.__setattr__(self, "efficiency", float(self.efficiency))
        object.__setattr__(self, "max_count", int(self.max_count))

    @property
    def odds(self) -> float:
        """``eta / (1 - eta)``; infinite for a lossless detector."""
        if self.efficiency == 1.0:
            return math.inf
        return self.efficiency / (1.0 - self.efficiency)


@dataclass(frozen=True)
class CountDistribution:
    """Photocount probabilities for ``m = 0..N``."""

    probs: np.ndarray

    @property
    def max_count(self) -> int:
        return len(self.probs) - 1

    def moment(self, p: int) -> float:
        m = np.arange(len(self.probs), dtype=float)
        return float(np.dot(m**p, self.probs))


def binomial_loss_matrix(m: np.ndarray, n: np.ndarray, efficiency: float) -> np.ndarray:
    """``w[i, j] = C(n_j, m_i) eta^m_i (1-eta)^(n_j - m_i)``, zero where m > n.

    Built from log-gamma terms so it stays finite for n in the 1e5 range.
    """
    _check_efficiency(efficiency)
    m = np.asarray(m, dtype=float)[:, None]
    n = np.asarray(n, dtype=float)[None, :]
    valid = m <= n
    k = np.where(valid, n - m, 0.0)
    mm = np.where(valid, m, 0.0)
    log_w = (
        gammaln(n + 1.0) - gammaln(mm + 1.0) - gammaln(k + 1.0)
        + xlogy(mm, efficiency) + xlog1py(k, -efficiency)
    )
    return np.exp(np.where(valid, log_w, -np.inf))


def loss_conditional_prob(m: int, n: int, efficiency: float) -> float:
    """Probability that ``m`` of ``n`` incident photons are registered."""
    _check_efficiency(efficiency)
    if m < 0 or n < 0:
        raise DomainError(f"photon numbers must be nonnegative, got m={m}, n={n}")
    if m > n:
        return 0.0
    return float(binomial_loss_matrix(np.array([m]), np.array([n]), efficiency)[0, 0])


def _clip_saturated(row: np.ndarray) -> np.ndarray:
    low = row.min(initial=0.0)
    if low < -NEGATIVE_ROUNDOFF_TOL:
        warnings.warn(
            f"saturated outcome probability {low:.3e} below round-off tolerance",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.clip(row, 0.0, None)


def response_matrix(det: DetectorModel, n_max: int) -> np.ndarray:
    """Matrix ``R[m, n] = <n|Pi_m|n>`` for ``m = 0..N`` and ``n = 0..n_max``.

    Columns sum to one; the last row is the saturated outcome.
    """
    N = det.max_count
    n = np.arange(n_max + 1)
    resolved = binomial_loss_matrix(np.arange(N), n, det.efficiency)
    saturated = _clip_saturated(1.0 - resolved.sum(axis=0))
    return np.vstack([resolved, saturated])


def _as_probs(dist) -> np.ndarray:
    return np.asarray(getattr(dist, "probs", dist), dtype=float)


def apply_detector(det: DetectorModel, dist) -> CountDistribution:
    """Photocount distribution produced by ``det`` on a photon-number distribution.

    ``dist`` is a :class:`~pnrd.states.NumberDistribution` or a plain vector
    over ``n = 0..cutoff``. Mass not assigned to ``m < N`` goes to ``m = N``.
    """
    p = _as_probs(dist)
    total = p.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValidationError(f"input distribution sums to {total!r}, not 1")
    if (p < 0).any():
        raise ValidationError("input distribution has negative entries")
    N = det.max_count
    n = np.arange(len(p))
    resolved = binomial_loss_matrix(np.arange(N), n, det.efficiency) @ p
    out = np.empty(N + 1)
    out[:N] = resolved
    out[N] = _clip_saturated(np.array([1.0 - resolved.sum()]))[0]
    return CountDistribution(out)


def _fock(n: int) -> np.ndarray:
    v = np.zeros(n + 1)
    v[n] = 1.0
    return v


def coefficients_C(n_max: int, det: DetectorModel, n=None) -> np.ndarray:
    """``C_n`` for ``n = 0..n_max`` by the positive finite sum
    ``sum_{m=N+1}^{n} (m - N) w_{m,n}``.

    ``n`` restricts the evaluation to a subset of photon numbers <= n_max.
    """
    N = det.max_count
    n = np.arange(n_max + 1) if n is None else np.asarray(n)
    if n_max <= N:
        return np.zeros(len(n))
    m = np.arange(N + 1, n_max + 1)
    w = binomial_loss_matrix(m, n, det.efficiency)
    return (m - N).astype(float) @ w


def coefficients_D(n_max: int, det: DetectorModel) -> np.ndarray:
    """``D_n`` for ``n = 0..n_max``, i.e. ``(1/2) sum_{m=N+2}^{n} (m-N)(m-N-1) w_{m,n}``."""
    N = det.max_count
    n = np.arange(n_max + 1)
    if n_max <= N + 1:
        return np.zeros(n_max + 1)
    m = np.arange(N + 2, n_max + 1)
    w = binomial_loss_matrix(m, n, det.efficiency)
    return 0.5 * ((m - N) * (m - N - 1)).astype(float) @ w


def coefficient_C(n: int, det: DetectorModel) -> float:
    """Saturation deficit of the mean count on Fock ``|n>``: ``eta n - <m>``."""
    if n < 0:
        raise DomainError(f"photon number must be nonnegative, got {n}")
    return float(coefficients_C(n, det)[n])


def coefficient_D(n: int, det: DetectorModel) -> float:
    """Second-moment saturation coefficient on Fock ``|n>``."""
    if n < 0:
        raise DomainError(f"photon number must be nonnegative, got {n}")
    return float(coefficients_D(n, det)[n])


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def coefficient_C_hypergeometric(n: int, det: DetectorModel) -> float:
    """``C(n, N+1) x^(N+1) (1-eta)^n 2F1(2, N-n+1; N+2; -x)`` with ``x = eta/(1-eta)``.

    Cross-check route only; undefined for a lossless detector.
    """
    N, eta = det.max_count, det.efficiency
    if eta == 1.0:
        raise DomainError("hypergeometric form is singular at efficiency 1")
    if n <= N:
        return 0.0
    if eta == 0.0:
        return 0.0
    x = det.odds
    log_pref = _log_binom(n, N + 1) + (N + 1) * math.log(x) + n * math.log1p(-eta)
    return math.exp(log_pref) * terminating_hypergeometric(2.0, N - n + 1, N + 2.0, -x)


def coefficient_D_hypergeometric(n: int, det: DetectorModel) -> float:
    """``C(n, N+2) x^(N+2) (1-eta)^n 2F1(3, N-n+2; N+3; -x)``; cross-check route."""
    N, eta = det.max_count, det.efficiency
    if eta == 1.0:
        raise DomainError("hypergeometric form is singular at efficiency 1")
    if n <= N + 1:
        return 0.0
    if eta == 0.0:
        return 0.0
    x = det.odds
    log_pref = _log_binom(n, N + 2) + (N + 2) * math.log(x) + n * math.log1p(-eta)
    return math.exp(log_pref) * terminating_hypergeometric(3.0, N - n + 2, N + 3.0, -x)


def fock_moments(p: int, n_max: int, det: DetectorModel) -> np.ndarray:
    """``<n| m^p |n>`` for all ``n = 0..n_max`` (operator moment of the POVM)."""
    if p < 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    R = response_matrix(det, n_max)
    m = np.arange(det.max_count + 1, dtype=float)
    return (m**p) @ R


def fock_moment(p: int, n: int, det: DetectorModel) -> float:
    """``<n| m^p |n>`` from the photocount distribution of Fock ``|n>``."""
    if p < 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    if n < 0:
        raise DomainError(f"photon number must be nonnegative, got {n}")
    return apply_detector(det, _fock(n)).moment(p)


def expectation_moment(p: int, det: DetectorModel, dist) -> float:
    """``sum_n p_n <n| m^p |n>`` for a photon-number distribution."""
    if p < 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    return apply_detector(det, dist).moment(p)
