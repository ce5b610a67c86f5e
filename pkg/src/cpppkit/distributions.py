"""Scalar special functions, CDFs/quantiles, and elementary samplers.

Deliberately not a general distribution zoo: only the pieces the
calibration pipeline and the budget planner need. Everything here is
pure and reentrant; sampler functions take an owned numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import check_probability

__all__ = [
    "BetaParams",
    "BetaBinomialParams",
    "log_gamma",
    "beta_cdf",
    "beta_quantile",
    "beta_binomial_log_pmf",
    "beta_binomial_cdf",
    "normal_cdf",
    "normal_quantile",
    "sample_beta",
    "sample_binomial",
    "empirical_quantile",
]


@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of a Beta distribution; both must be positive."""

    a: float
    b: float

    def __post_init__(self):
        for name, value in (("a", self.a), ("b", self.b)):
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"Beta shape {name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class BetaBinomialParams:
    """Trial count and Beta shape of a Beta-Binomial distribution."""

    trials: int
    shape: BetaParams

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be an integer >= 1, got {self.trials}")


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"log_gamma requires finite x > 0, got {x}")
    return math.lgamma(x)


_CF_MAX_ITER = 500
_CF_EPS = 1e-15
_CF_TINY = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued-fraction evaluation with the symmetry switch at
    ``x = (a + 1) / (a + b + 2)`` so accuracy is uniform over the domain.
    """
    BetaParams(a, b)
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"beta_cdf requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_prefactor = (
        log_gamma(a + b)
        - log_gamma(a)
        - log_gamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    prefactor = math.exp(ln_prefactor)
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, prefactor * _beta_continued_fraction(a, b, x) / a)
    return max(0.0, 1.0 - prefactor * _beta_continued_fraction(b, a, 1.0 - x) / b)


def beta_quantile(q: float, a: float, b: float) -> float:
    """Inverse of :func:`beta_cdf` in its first argument.

    Bisection on the monotone CDF; the result satisfies
    ``beta_cdf(result, a, b) == q`` to well below 1e-9.
    """
    BetaParams(a, b)
    q = check_probability(q, "q")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-16:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if beta_cdf(mid, a, b) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _logaddexp(x: float, y: float) -> float:
    if x == -math.inf:
        return y
    if y == -math.inf:
        return x
    hi, lo = (x, y) if x >= y else (y, x)
    return hi + math.log1p(math.exp(lo - hi))


def beta_binomial_log_pmf(j: int, trials: int, a: float, b: float) -> float:
    """Log pmf of the Beta-Binomial at integer ``j`` in ``[0, trials]``."""
    return (
        log_gamma(trials + 1.0)
        - log_gamma(j + 1.0)
        - log_gamma(trials - j + 1.0)
        + log_gamma(j + a)
        + log_gamma(trials - j + b)
        - log_gamma(trials + a + b)
        + log_gamma(a + b)
        - log_gamma(a)
        - log_gamma(b)
    )


def beta_binomial_cdf(k: int, trials: int, a: float, b: float) -> float:
    """CDF of the Beta-Binomial: sum of pmf terms up to ``floor(k)``.

    Accumulated as a running log-sum so it stays stable for trial counts
    in the thousands. ``k < 0`` gives 0 and ``k >= trials`` gives 1.
    """
    BetaBinomialParams(trials, BetaParams(a, b))
    k = math.floor(k)
    if k < 0:
        return 0.0
    if k >= trials:
        return 1.0
    log_sum = -math.inf
    for j in range(k + 1):
        log_sum = _logaddexp(log_sum, beta_binomial_log_pmf(j, trials, a, b))
    return min(1.0, math.exp(log_sum))


def normal_cdf(x: float, mean: float = 0.0, variance: float = 1.0) -> float:
    """Normal CDF with explicit mean and variance.

    ``variance == 0`` degenerates to the step function ``1{x >= mean}``.
    """
    variance = float(variance)
    if not math.isfinite(variance) or variance < 0.0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if variance == 0.0:
        return 1.0 if x >= mean else 0.0
    z = (float(x) - float(mean)) / math.sqrt(variance)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(q: float, mean: float = 0.0, variance: float = 1.0) -> float:
    """Inverse normal CDF, used for confidence-interval multipliers."""
    from statistics import NormalDist

    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"normal_quantile requires q in (0, 1), got {q}")
    if variance < 0.0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    return mean + math.sqrt(variance) * NormalDist().inv_cdf(q)


def sample_beta(a: float, b: float, rng: np.random.Generator, size=None):
    """Draw from Beta(a, b) using the supplied generator."""
    BetaParams(a, b)
    return rng.beta(a, b, size=size)


def sample_binomial(n: int, prob: float, rng: np.random.Generator, size=None):
    """Draw from Binomial(n, prob) using the supplied generator."""
    if int(n) != n or n < 0:
        raise ValueError(f"n must be an integer >= 0, got {n}")
    prob = check_probability(prob, "prob")
    return rng.binomial(int(n), prob, size=size)


def empirical_quantile(series, q: float) -> float:
    """Inverse-ECDF (type 1) quantile of a non-empty sequence.

    Returns the smallest element such that the fraction of elements at or
    below it is at least ``q``. The index is computed with exact rational
    arithmetic on the float ``q`` so discrete chains keep the identity
    ``fraction(series <= result) >= q`` without floating-point wobble.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be a non-empty one-dimensional sequence")
    q = check_probability(q, "q")
    n = x.size
    k = math.ceil(Fraction(q) * n)
    idx = min(max(k - 1, 0), n - 1)
    return float(np.sort(x)[idx])
