"""Photon-number statistics of the two-mode sources.

Only diagonal (phase-insensitive) information is kept: amplitudes ``b_n`` are
reduced to weights ``|b_n|^2`` on construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlogy

from .special import DomainError

TAIL_TERM_RTOL = 1e-16
NORMALIZATION_TOL = 1e-12


class SourceKind(str, enum.Enum):
    TMC = "tmc"
    TWB = "twb"
    CUSTOM = "custom"


@dataclass(frozen=True)
class NumberDistribution:
    """Probabilities over ``n = 0..cutoff``."""

    probs: np.ndarray
    mean_hint: float | None = None

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("probabilities must be a nonempty vector")
        if (probs < 0).any():
            raise DomainError("probabilities must be nonnegative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def cutoff(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def moment(self, p: int) -> float:
        return float(np.dot(np.arange(len(self.probs), dtype=float) ** p, self.probs))

    def padded(self, cutoff: int) -> np.ndarray:
        """Probability vector zero-padded (or checked) to ``cutoff``."""
        if cutoff < self.cutoff:
            raise DomainError(f"cannot shrink distribution from {self.cutoff} to {cutoff}")
        out = np.zeros(cutoff + 1)
        out[: len(self.probs)] = self.probs
        return out


def poisson_cutoff(mean: float, max_count: int = 0) -> int:
    """Initial truncation point before adaptive extension."""
    return math.ceil(mean + 12.0 * math.sqrt(mean + 1.0)) + max_count + 30


def _poisson_pmf(n: np.ndarray, mean: float) -> np.ndarray:
    return np.exp(xlogy(n, mean) - mean - gammaln(n + 1.0))


def poisson_distribution(
    mean: float, max_count: int = 0, cutoff: int | None = None
) -> NumberDistribution:
    """Poisson weights ``exp(-mean) mean^n / n!``.

    The cutoff grows until the next term drops below ``1e-16`` of the running
    sum unless ``cutoff`` is given explicitly.
    """
    if mean < 0 or math.isnan(mean):
        raise DomainError(f"mean photon number must be nonnegative, got {mean}")
    if cutoff is None:
        cutoff = poisson_cutoff(mean, max_count)
        while True:
            n = np.arange(cutoff + 1, dtype=float)
            probs = _poisson_pmf(n, mean)
            if _poisson_pmf(np.array([cutoff + 1.0]), mean)[0] < TAIL_TERM_RTOL * probs.sum():
                break
            cutoff = math.ceil(cutoff * 1.25)
    else:
        probs = _poisson_pmf(np.arange(cutoff + 1, dtype=float), mean)
    return NumberDistribution(probs, mean_hint=float(mean))


def from_amplitudes(amplitudes) -> NumberDistribution:
    """Diagonal weights ``|b_n|^2`` from (possibly complex) amplitudes."""
    weights = np.abs(np.asarray(amplitudes)) ** 2
    return custom_distribution(weights)


def custom_distribution(weights) -> NumberDistribution:
    """Validate an arbitrary normalized weight vector."""
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
        raise DomainError(f"weights sum to {w.sum()!r}, not 1")
    return NumberDistribution(w)


@dataclass(frozen=True)
class TwoModeSource:
    """Joint photon statistics of a two-mode source.

    TMC: independent Poisson marginals. TWB and custom sources put all weight
    on the diagonal ``n1 = n2``.
    """

    kind: SourceKind
    mean_photons: float
    weights: NumberDistribution = field(repr=False)

    def marginal(self) -> NumberDistribution:
        """Photon-number distribution of either arm."""
        return self.weights

    def joint(self) -> np.ndarray:
        """Joint photon-number matrix ``p(n1, n2)`` on the weight cutoff."""
        p = np.asarray(self.weights.probs)
        if self.kind is SourceKind.TMC:
            return np.outer(p, p)
        return np.diag(p)


def make_source(kind, mean: float, max_count: int = 0) -> TwoModeSource:
    """TMC or TWB source at mean photon number ``mean`` per arm."""
    kind = SourceKind(kind)
    if kind is SourceKind.CUSTOM:
        raise DomainError("use correlated_source() for custom weights")
    return TwoModeSource(kind, float(mean), poisson_distribution(mean, max_count))


def correlated_source(weights) -> TwoModeSource:
    """Diagonal two-mode source with arbitrary weights on ``|n>|n>``."""
    dist = weights if isinstance(weights, NumberDistribution) else custom_distribution(weights)
    return TwoModeSource(SourceKind.CUSTOM, dist.mean(), dist)
