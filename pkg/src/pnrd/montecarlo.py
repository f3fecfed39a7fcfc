"""Trial-by-trial simulation of joint photodetection.

Each trial draws the photon numbers from the source, thins every arm
binomially with its efficiency and clips at the saturation count. Workers
get statistically independent streams spawned from one ``SeedSequence``;
trial counts are pre-assigned to workers so the result depends only on
``(seed, trials, workers)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .povm import DetectorModel
from .special import DomainError
from .states import SourceKind, TwoModeSource

CHUNK = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    trials: int = 1_000_000
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SampleStats:
    """Empirical joint statistics and their standard errors."""

    trials: int
    mean1: float
    mean2: float
    second1: float
    second2: float
    cross: float
    vdp: float
    nrf: float
    se_mean1: float
    se_mean2: float
    se_second1: float
    se_second2: float
    se_cross: float
    se_vdp: float
    se_nrf: float
    hist1: tuple[int, ...] = field(repr=False)
    hist2: tuple[int, ...] = field(repr=False)

    def marginal(self, arm: int) -> np.ndarray:
        """Empirical photocount distribution of arm 1 or 2."""
        hist = np.asarray(self.hist1 if arm == 1 else self.hist2, dtype=float)
        return hist / self.trials


def worker_streams(seed: int, workers: int) -> list[np.random.Generator]:
    """Independent generators, one per worker, derived from ``(seed, w)``."""
    children = np.random.SeedSequence(seed).spawn(workers)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def sample_poisson(mean: float, rng: np.random.Generator, size=None):
    """Exact Poisson variates (numpy: inversion for small means, PTRS rejection above)."""
    if mean < 0 or math.isnan(mean):
        raise DomainError(f"mean must be nonnegative, got {mean}")
    return rng.poisson(mean, size)


def binomial_thin(n, efficiency: float, rng: np.random.Generator):
    """Keep each of ``n`` photons independently with probability ``efficiency``."""
    if not 0.0 <= efficiency <= 1.0:
        raise DomainError(f"efficiency must lie in [0, 1], got {efficiency}")
    n = np.asarray(n)
    if (n < 0).any():
        raise DomainError("photon numbers must be nonnegative")
    return rng.binomial(n, efficiency)


def _draw_photons(source: TwoModeSource, rng: np.random.Generator, size: int):
    if source.kind is SourceKind.TMC:
        n1 = sample_poisson(source.mean_photons, rng, size)
        n2 = sample_poisson(source.mean_photons, rng, size)
        return n1, n2
    if source.kind is SourceKind.TWB:
        n = sample_poisson(source.mean_photons, rng, size)
        return n, n
    p = np.asarray(source.weights.probs)
    n = rng.choice(len(p), size=size, p=p / p.sum())
    return n, n


# Power sums accumulated per trial: exact integers, merged in worker order.
_SUM_KEYS = (
    "m1", "m2", "m1_2", "m2_2", "m1_4", "m2_4", "x", "x_2",
    "d", "d_2", "d_3", "d_4", "s", "s_2", "ds", "d2s",
)


def _power_sums(m1: np.ndarray, m2: np.ndarray) -> dict[str, int]:
    m1 = m1.astype(np.int64)
    m2 = m2.astype(np.int64)
    d = m1 - m2
    s = m1 + m2
    x = m1 * m2
    cols = {
        "m1": m1, "m2": m2, "m1_2": m1**2, "m2_2": m2**2, "m1_4": m1**4, "m2_4": m2**4,
        "x": x, "x_2": x * x, "d": d, "d_2": d**2, "d_3": d**3, "d_4": d**4,
        "s": s, "s_2": s * s, "ds": d * s, "d2s": d * d * s,
    }
    return {k: int(v.sum()) for k, v in cols.items()}


def _run_worker(source, det1, det2, rng, trials):
    N1, N2 = det1.max_count, det2.max_count
    sums = dict.fromkeys(_SUM_KEYS, 0)
    hist1 = np.zeros(N1 + 1, dtype=np.int64)
    hist2 = np.zeros(N2 + 1, dtype=np.int64)
    done = 0
    while done < trials:
        size = min(CHUNK, trials - done)
        n1, n2 = _draw_photons(source, rng, size)
        m1 = np.minimum(binomial_thin(n1, det1.efficiency, rng), N1)
        m2 = np.minimum(binomial_thin(n2, det2.efficiency, rng), N2)
        for k, v in _power_sums(m1, m2).items():
            sums[k] += v
        hist1 += np.bincount(m1, minlength=N1 + 1)
        hist2 += np.bincount(m2, minlength=N2 + 1)
        done += size
    return sums, hist1, hist2


def _split(trials: int, workers: int) -> list[int]:
    base, extra = divmod(trials, workers)
    return [base + (w < extra) for w in range(workers)]


def _se_of_mean(raw1: float, raw2: float, T: int) -> float:
    # standard error of a sample mean from E[X] and E[X^2]
    if T < 2:
        return math.nan
    var = max(raw2 - raw1 * raw1, 0.0) * T / (T - 1)
    return math.sqrt(var / T)


def stats_from_sums(sums: dict[str, float], T: int, hist1, hist2) -> SampleStats:
    """Estimators and delta-method standard errors from accumulated power sums.

    ``sums`` may also hold exact expectations times ``T`` (see
    :func:`expected_sample_stats`).
    """
    e = {k: v / T for k, v in sums.items()}
    mu_d, mu_s = e["d"], e["s"]
    # central moments of the difference and its mixed moment with the sum
    c2 = e["d_2"] - mu_d**2
    c4 = e["d_4"] - 4 * mu_d * e["d_3"] + 6 * mu_d**2 * e["d_2"] - 3 * mu_d**4
    c21 = e["d2s"] - 2 * mu_d * e["ds"] - mu_s * e["d_2"] + 2 * mu_d**2 * mu_s
    var_s = max(e["s_2"] - mu_s**2, 0.0)
    c2 = max(c2, 0.0)
    vdp = c2 * T / (T - 1) if T > 1 else 0.0
    var_vdp = max(c4 - c2 * c2, 0.0) / T
    var_sbar = var_s / T
    cov = c21 / T
    if mu_s > 0:
        nrf = vdp / mu_s
        var_nrf = var_vdp / mu_s**2 + vdp**2 * var_sbar / mu_s**4 - 2 * vdp * cov / mu_s**3
        se_nrf = math.sqrt(max(var_nrf, 0.0))
    else:
        nrf, se_nrf = math.nan, math.nan
    return SampleStats(
        trials=T,
        mean1=e["m1"],
        mean2=e["m2"],
        second1=e["m1_2"],
        second2=e["m2_2"],
        cross=e["x"],
        vdp=vdp,
        nrf=nrf,
        se_mean1=_se_of_mean(e["m1"], e["m1_2"], T),
        se_mean2=_se_of_mean(e["m2"], e["m2_2"], T),
        se_second1=_se_of_mean(e["m1_2"], e["m1_4"], T),
        se_second2=_se_of_mean(e["m2_2"], e["m2_4"], T),
        se_cross=_se_of_mean(e["x"], e["x_2"], T),
        se_vdp=math.sqrt(var_vdp) if T > 1 else math.nan,
        se_nrf=se_nrf if T > 1 else math.nan,
        hist1=tuple(int(h) for h in hist1),
        hist2=tuple(int(h) for h in hist2),
    )


def simulate_counts(source: TwoModeSource, det1: DetectorModel, det2: DetectorModel, cfg: SimConfig) -> SampleStats:
    """Monte Carlo estimate of the joint photocount statistics."""
    streams = worker_streams(cfg.seed, cfg.workers)
    shares = _split(cfg.trials, cfg.workers)
    if cfg.workers == 1:
        results = [_run_worker(source, det1, det2, streams[0], shares[0])]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(_run_worker, source, det1, det2, rng, share)
                for rng, share in zip(streams, shares)
            ]
            results = [f.result() for f in futures]
    sums = dict.fromkeys(_SUM_KEYS, 0)
    hist1 = np.zeros(det1.max_count + 1, dtype=np.int64)
    hist2 = np.zeros(det2.max_count + 1, dtype=np.int64)
    for part, h1, h2 in results:
        for k in _SUM_KEYS:
            sums[k] += part[k]
        hist1 += h1
        hist2 += h2
    return stats_from_sums(sums, cfg.trials, hist1, hist2)


def expected_sample_stats(joint: np.ndarray, trials: int) -> SampleStats:
    """Noise-free :class:`SampleStats`: exact expectations of every power sum
    under the joint count distribution ``joint[m1, m2]``, with the standard
    errors a run of ``trials`` trials would have."""
    N1, N2 = joint.shape[0] - 1, joint.shape[1] - 1
    m1 = np.arange(N1 + 1, dtype=float)[:, None]
    m2 = np.arange(N2 + 1, dtype=float)[None, :]
    d = m1 - m2
    s = m1 + m2
    x = m1 * m2
    cols = {
        "m1": m1 + 0 * m2, "m2": m2 + 0 * m1, "m1_2": m1**2 + 0 * m2, "m2_2": m2**2 + 0 * m1,
        "m1_4": m1**4 + 0 * m2, "m2_4": m2**4 + 0 * m1, "x": x, "x_2": x * x,
        "d": d, "d_2": d**2, "d_3": d**3, "d_4": d**4, "s": s, "s_2": s * s,
        "ds": d * s, "d2s": d * d * s,
    }
    sums = {k: float((v * joint).sum()) * trials for k, v in cols.items()}
    hist1 = np.rint(joint.sum(axis=1) * trials).astype(np.int64)
    hist2 = np.rint(joint.sum(axis=0) * trials).astype(np.int64)
    stats = stats_from_sums(sums, trials, hist1, hist2)
    # exact variance, not the T/(T-1) sample estimator
    vdp = stats.vdp * (trials - 1) / trials
    total = stats.mean1 + stats.mean2
    return replace(stats, vdp=vdp, nrf=vdp / total if total > 0 else math.nan)
