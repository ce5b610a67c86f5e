"""Posterior predictive p-value estimation from a discrepancy series.

Thresholding convention: a difference of exactly zero counts as "at least
as extreme" (the indicator uses >=). Continuous discrepancies make ties
measure-zero, but simulated or discrete data can tie, so the convention
is fixed here once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DiscrepancySeries

__all__ = [
    "IndicatorChain",
    "PppEstimate",
    "EssEstimate",
    "CountMoments",
    "indicator_chain",
    "ppp_hat",
    "ess_batch_means",
    "estimate_ppp",
    "count_moments",
]


@dataclass(frozen=True)
class IndicatorChain:
    """0/1 chain marking replicated discrepancies at least as extreme as observed."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1 or bits.size < 1:
            raise ValueError("indicator chain must be a non-empty 1-d sequence")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("indicator chain entries must be 0 or 1")

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True)
class EssEstimate:
    ess: float
    tau: float
    degenerate: bool = False


@dataclass(frozen=True)
class PppEstimate:
    """Point estimate of the posterior predictive p-value.

    ``plain`` is k/m; ``anti_zero`` is (k + 0.5)/(m + 1), asymptotically
    equivalent but never exactly 0 or 1. ``ess``/``tau`` describe the
    indicator chain and are filled by :func:`estimate_ppp`.
    """

    k: int
    m: int
    value: float
    variant: str
    ess: float | None = None
    tau: float | None = None
    degenerate: bool = False

    def __post_init__(self):
        if not 0 <= self.k <= self.m:
            raise ValueError(f"count k={self.k} outside [0, m={self.m}]")


def indicator_chain(deltas: DiscrepancySeries) -> IndicatorChain:
    """Threshold a discrepancy series at zero (ties count as 1)."""
    return IndicatorChain((deltas.values >= 0.0).astype(np.uint8))


def _value(k: int, m: int, variant: str) -> float:
    if variant == "plain":
        return k / m
    if variant == "anti_zero":
        return (k + 0.5) / (m + 1)
    raise ValueError(f"unknown variant {variant!r}; use 'plain' or 'anti_zero'")


def ppp_hat(chain: IndicatorChain, variant: str = "plain") -> PppEstimate:
    """Point estimate from an indicator chain, without mixing diagnostics."""
    k = int(chain.bits.sum())
    m = len(chain)
    return PppEstimate(k=k, m=m, value=_value(k, m, variant), variant=variant)


def ess_batch_means(bits) -> EssEstimate:
    """Effective sample size of a 0/1 chain by the batch-means method.

    Batch size is floor(sqrt(m)). The autocorrelation time is clamped to
    at least 1 so super-efficient chains cannot deflate downstream
    variance inflation. Constant chains cannot carry mixing information:
    they return ess = m with the degeneracy flag set.
    """
    x = np.asarray(bits, dtype=float).ravel()
    m = x.size
    if m < 10:
        raise ValueError(f"need at least 10 entries for batch means, got {m}")
    if np.all(x == x[0]):
        return EssEstimate(ess=float(m), tau=1.0, degenerate=True)
    if 2 * x.sum() > m:  # canonical polarity: exact invariance under complement
        x = 1.0 - x
    batch_size = math.isqrt(m)
    n_batches = m // batch_size
    used = x[: n_batches * batch_size]
    overall = used.mean()
    batch_means = used.reshape(n_batches, batch_size).mean(axis=1)
    longrun_var = batch_size * np.sum((batch_means - overall) ** 2) / (n_batches - 1)
    naive_var = used.var(ddof=1)
    if longrun_var <= 0.0:
        tau = 1.0
    else:
        tau = max(1.0, longrun_var / naive_var)
    return EssEstimate(ess=m / tau, tau=tau, degenerate=False)


def estimate_ppp(deltas: DiscrepancySeries, variant: str = "plain") -> PppEstimate:
    """Full estimate including batch-means ESS of the indicator chain."""
    chain = indicator_chain(deltas)
    base = ppp_hat(chain, variant)
    ess = ess_batch_means(chain.bits)
    return PppEstimate(
        k=base.k,
        m=base.m,
        value=base.value,
        variant=variant,
        ess=ess.ess,
        tau=ess.tau,
        degenerate=ess.degenerate,
    )


@dataclass(frozen=True)
class CountMoments:
    mean: float
    variance: float


def count_moments(ppp: float, m: int, ess: float) -> CountMoments:
    """Mean and variance of the extreme-discrepancy count over m draws.

    With serially dependent draws the binomial variance is inflated by
    m/ess, so variance = m^2 * ppp * (1 - ppp) / ess.
    """
    if not 0.0 <= ppp <= 1.0:
        raise ValueError(f"ppp must be in [0, 1], got {ppp}")
    if ess > m:
        raise ValueError(f"ess={ess} cannot exceed chain length m={m}")
    if ess <= 0:
        raise ValueError(f"ess must be positive, got {ess}")
    return CountMoments(mean=m * ppp, variance=m * m * ppp * (1.0 - ppp) / ess)
