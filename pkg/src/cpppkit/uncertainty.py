"""Standard errors for the calibrated p-value.

Three estimators: a plug-in based on a normal approximation of replicate
counts, a moving-block bootstrap that resamples the stored discrepancy
series, and a bootstrap that redraws counts from the same normal
approximation. All of them need the autocorrelation time of each short
replicate chain, which short chains cannot estimate well on their own;
the mixing-transfer table borrows it from the long observed-data chain
instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator, check_probability
from .calibration import count_threshold
from .distributions import empirical_quantile, normal_cdf, normal_quantile
from .model import DiscrepancySeries
from .pvalues import ess_batch_means

__all__ = [
    "TransferTable",
    "VarianceEstimate",
    "transfer_tau",
    "prob_below_threshold",
    "annotate_tau",
    "plugin_variance",
    "bootstrap_mbb",
    "bootstrap_normal",
    "confidence_interval",
]

_GRID = np.round(np.arange(0.01, 0.995, 0.01), 2)


@dataclass(frozen=True)
class TransferTable:
    """Mixing information transferred from the observed-data chain.

    For each grid probability q, the observed discrepancy series is
    thresholded at its q-quantile; the autocorrelation time of that 0/1
    chain stands in for the time of a replicate chain whose estimated
    p-value is q. Lookups interpolate linearly between grid points and
    never drop below 1. A conservative multiplier can be applied via
    ``tau_buffer``.
    """

    grid_q: np.ndarray
    grid_tau: np.ndarray
    grid_threshold: np.ndarray
    length: int
    tau_buffer: float = 1.0
    degenerate_mask: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_series(cls, deltas: DiscrepancySeries, *, tau_buffer: float = 1.0) -> "TransferTable":
        values = deltas.values
        m = values.size
        if m < 1000:
            raise ValueError(
                f"transfer table needs an observed-data chain of length >= 1000, got {m}"
            )
        if tau_buffer < 1.0:
            raise ValueError(f"tau_buffer must be >= 1, got {tau_buffer}")
        taus = np.empty(_GRID.size)
        thresholds = np.empty(_GRID.size)
        degenerate = np.zeros(_GRID.size, dtype=bool)
        for i, q in enumerate(_GRID):
            threshold = empirical_quantile(values, float(q))
            thresholds[i] = threshold
            bits = (values <= threshold).astype(np.uint8)
            est = ess_batch_means(bits)
            taus[i] = est.tau
            degenerate[i] = est.degenerate
        return cls(
            grid_q=_GRID.copy(),
            grid_tau=taus,
            grid_threshold=thresholds,
            length=m,
            tau_buffer=float(tau_buffer),
            degenerate_mask=degenerate,
        )

    def tau(self, q: float) -> float:
        q = check_probability(q, "q")
        raw = float(np.interp(q, self.grid_q, self.grid_tau))
        return max(1.0, raw * self.tau_buffer)

    def threshold(self, q: float) -> float:
        q = check_probability(q, "q")
        return float(np.interp(q, self.grid_q, self.grid_threshold))


def transfer_tau(table: TransferTable, q: float) -> float:
    """Autocorrelation time for a replicate with estimated p-value ``q``."""
    return table.tau(q)


def prob_below_threshold(
    chain_length: int, ppp_y: float, replicate_ppp: float, tau: float
) -> float:
    """Probability that a replicate's count lands at or below the observed rate.

    Normal approximation with continuity correction: the count over
    ``chain_length`` dependent draws has mean chain_length * replicate_ppp
    and binomial variance inflated by ``tau``.
    """
    if not 0.0 < replicate_ppp < 1.0:
        raise ValueError(
            f"replicate_ppp must be strictly inside (0, 1), got {replicate_ppp}"
        )
    mean = chain_length * replicate_ppp
    variance = tau * chain_length * replicate_ppp * (1.0 - replicate_ppp)
    return normal_cdf(chain_length * ppp_y + 0.5, mean=mean, variance=variance)


@dataclass
class VarianceEstimate:
    """Variance of the calibrated p-value estimate, tagged by method."""

    method: str
    variance: float
    se: float
    b: int = 0
    block_length: int | None = None
    ci_level: float | None = None
    ci: tuple[float, float] | None = None


def annotate_tau(results, table: TransferTable) -> None:
    """Fill per-replicate tau/ess fields from the transfer table.

    Values already present are left alone, so tests and callers can
    force specific autocorrelation times.
    """
    for res in results:
        if res.tau_hat is None:
            res.tau_hat = table.tau(res.ppp_hat)
        if res.ess_hat is None:
            res.ess_hat = res.n_iterations / res.tau_hat if res.tau_hat > 0 else float("inf")


def plugin_variance(results, ppp_y: float, table: TransferTable) -> VarianceEstimate:
    """Closed-form variance estimate, no extra simulation.

    Each replicate contributes its probability of falling below the
    observed rate; the estimate is mean * (1 - mean) / r, which collapses
    to the exact Bernoulli-sampling variance when chains are long enough
    that those probabilities are all 0 or 1.
    """
    results = list(results)
    if len(results) < 2:
        raise ValueError("plug-in variance needs at least two replicates")
    ppp_y = check_probability(ppp_y, "ppp_y")
    annotate_tau(results, table)
    probs = np.array(
        [
            prob_below_threshold(res.n_iterations, ppp_y, res.ppp_hat, res.tau_hat)
            for res in results
        ]
    )
    mean = float(probs.mean())
    variance = mean * (1.0 - mean) / len(results)
    return VarianceEstimate(method="plugin", variance=variance, se=math.sqrt(variance))


def _mbb_resample(values: np.ndarray, block_length: int, rng) -> np.ndarray:
    m = values.size
    n_blocks = -(-m // block_length)
    starts = rng.integers(0, m - block_length + 1, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_length)[None, :]).ravel()[:m]
    return values[idx]


def bootstrap_mbb(
    results, ppp_y: float, b: int, block_length: int | None, rng
) -> VarianceEstimate:
    """Two-stage bootstrap with moving-block resampling of each chain.

    Outer stage resamples replicates with replacement; inner stage
    rebuilds each chosen replicate's count from overlapping blocks of its
    stored discrepancy series, preserving serial dependence. Default
    block length is floor(sqrt(chain length)), per replicate.
    """
    results = list(results)
    r = len(results)
    if b < 2:
        raise ValueError(f"need at least 2 bootstrap rounds, got {b}")
    ppp_y = check_probability(ppp_y, "ppp_y")
    if not hasattr(rng, "integers"):
        rng, _ = as_generator(rng)
    if block_length is not None and block_length < 1:
        raise ValueError(f"block_length must be >= 1, got {block_length}")

    series = [res.deltas.values for res in results]
    blocks = []
    for res in results:
        length = block_length if block_length is not None else math.isqrt(res.n_iterations)
        blocks.append(min(max(1, length), res.n_iterations))
    thresholds = np.array([count_threshold(ppp_y, res.n_iterations) for res in results])

    estimates = np.empty(b)
    for l in range(b):
        chosen = rng.integers(0, r, size=r)
        inside = 0
        for j in chosen:
            resampled = _mbb_resample(series[j], blocks[j], rng)
            count = int(np.sum(resampled >= 0.0))
            inside += count <= thresholds[j]
        estimates[l] = inside / r
    variance = float(np.var(estimates, ddof=1))
    reported_block = block_length if block_length is not None else None
    return VarianceEstimate(
        method="bootstrap_mbb",
        variance=variance,
        se=math.sqrt(variance),
        b=b,
        block_length=reported_block,
    )


def bootstrap_normal(results, ppp_y: float, b: int, table: TransferTable, rng) -> VarianceEstimate:
    """Two-stage bootstrap drawing counts from the normal approximation.

    Same outer resampling as the block bootstrap, but inner counts are
    redrawn from a normal with the replicate's inflated-binomial moments,
    rounded to the nearest integer and clamped to the valid range.
    """
    results = list(results)
    r = len(results)
    if b < 2:
        raise ValueError(f"need at least 2 bootstrap rounds, got {b}")
    ppp_y = check_probability(ppp_y, "ppp_y")
    if not hasattr(rng, "integers"):
        rng, _ = as_generator(rng)
    annotate_tau(results, table)

    lengths = np.array([res.n_iterations for res in results], dtype=float)
    ppps = np.array([res.ppp_hat for res in results])
    taus = np.array([res.tau_hat for res in results])
    thresholds = np.array([count_threshold(ppp_y, res.n_iterations) for res in results])

    chosen = rng.integers(0, r, size=(b, r))
    means = lengths[chosen] * ppps[chosen]
    sds = np.sqrt(taus[chosen] * lengths[chosen] * ppps[chosen] * (1.0 - ppps[chosen]))
    counts = np.rint(rng.normal(means, sds))
    counts = np.clip(counts, 0.0, lengths[chosen])
    estimates = (counts <= thresholds[chosen]).mean(axis=1)
    variance = float(np.var(estimates, ddof=1))
    return VarianceEstimate(
        method="bootstrap_normal", variance=variance, se=math.sqrt(variance), b=b
    )


def confidence_interval(cppp: float, estimate: VarianceEstimate, level: float = 0.95):
    """Normal-approximation interval for the calibrated p-value, clipped to [0, 1]."""
    cppp = check_probability(cppp, "cppp")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = normal_quantile((1.0 + level) / 2.0)
    lo = max(0.0, cppp - z * estimate.se)
    hi = min(1.0, cppp + z * estimate.se)
    estimate.ci_level = level
    estimate.ci = (lo, hi)
    return lo, hi
