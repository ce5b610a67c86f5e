"""Normal model for the speed-of-light measurements.

The data are famously contaminated by two low outliers, which a normal
model cannot reproduce. The discrepancy contrasts the distances of the
61st and 6th order statistics from the mean, so datasets with a heavy
left tail score very differently from normal replicates.
"""

from __future__ import annotations


from importlib import resources
from math import exp, log, pi

import numpy as np

from .model import BayesianModel

__all__ = [
    "NormalSample",
    "NewcombModel",
    "load_newcomb",
    "load_real_vector",
    "newcomb_discrepancy",
    "newcomb_log_posterior",
]

_UPPER_ORDER = 61
_LOWER_ORDER = 6
_ORDER_IDX = (_LOWER_ORDER - 1, _UPPER_ORDER - 1)


class NormalSample:
    """A real observation vector with cached sufficient statistics.

    Caching the sums makes the log posterior O(1) per evaluation, which
    is what keeps thousands of short calibration chains cheap. Instances
    are treated as immutable once built. ``_validate=False`` is a fast
    path for simulator output that is finite by construction.
    """

    __slots__ = ("values", "n", "sum", "sum_sq", "low_stat", "high_stat")

    def __init__(self, values, *, _validate: bool = True):
        if _validate:
            values = np.asarray(values, dtype=float).ravel()
            if values.size < 2:
                raise ValueError(f"need at least two observations, got {values.size}")
            if not np.all(np.isfinite(values)):
                raise ValueError("observations must be finite")
        self.values = values
        n = values.size
        self.n = n
        self.sum = float(values.sum())
        self.sum_sq = float(values.dot(values))
        if n >= _UPPER_ORDER:
            part = np.partition(values, _ORDER_IDX)
            self.low_stat = float(part[_LOWER_ORDER - 1])
            self.high_stat = float(part[_UPPER_ORDER - 1])
        else:
            self.low_stat = None
            self.high_stat = None

    def __len__(self) -> int:
        return int(self.values.size)

    def __repr__(self) -> str:
        return f"NormalSample(n={self.n}, mean={self.sum / self.n:.4g})"

    def digest_bytes(self) -> bytes:
        return np.ascontiguousarray(self.values).tobytes()


def newcomb_discrepancy(y, mu: float) -> float:
    """|y_(61) - mu| - |y_(6) - mu| with 1-indexed ascending order statistics."""
    if isinstance(y, NormalSample):
        if y.high_stat is None:
            raise ValueError(f"need at least {_UPPER_ORDER} observations, got {len(y)}")
        return abs(y.high_stat - mu) - abs(y.low_stat - mu)
    arr = np.asarray(y, dtype=float).ravel()
    if arr.size < _UPPER_ORDER:
        raise ValueError(f"need at least {_UPPER_ORDER} observations, got {arr.size}")
    part = np.partition(arr, (_LOWER_ORDER - 1, _UPPER_ORDER - 1))
    return abs(float(part[_UPPER_ORDER - 1]) - mu) - abs(float(part[_LOWER_ORDER - 1]) - mu)


def newcomb_log_posterior(mu: float, log_sigma: float, y) -> float:
    """Normal log likelihood plus a flat prior on (mu, log sigma)."""
    arr = np.asarray(getattr(y, "values", y), dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"need at least two observations, got {arr.size}")
    n = arr.size
    sigma2 = np.exp(2.0 * log_sigma)
    sse = float(np.sum((arr - mu) ** 2))
    return -0.5 * n * log(2.0 * pi) - n * log_sigma - 0.5 * sse / sigma2


class NewcombModel(BayesianModel):
    """Normal data model with flat prior on (mu, log sigma).

    ``n_observations`` fixes the size of predictive replicates; it is
    taken from the dataset the model is built for.
    """

    param_names = ("mu", "log_sigma")

    def __init__(self, n_observations: int = 66):
        if n_observations < _UPPER_ORDER:
            raise ValueError(
                f"order-statistic discrepancy needs n >= {_UPPER_ORDER}, got {n_observations}"
            )
        self.n_observations = int(n_observations)

    def as_sample(self, data) -> NormalSample:
        return data if isinstance(data, NormalSample) else NormalSample(data)

    def log_posterior(self, theta, data) -> float:
        mu = float(theta[0])
        log_sigma = float(theta[1])
        if abs(log_sigma) > 300.0:  # exp overflow guard; reject absurd proposals
            return -np.inf
        sample = self.as_sample(data)
        n = sample.n
        sse = sample.sum_sq - 2.0 * mu * sample.sum + n * mu * mu
        return -0.5 * n * log(2.0 * pi) - n * log_sigma - 0.5 * sse * exp(-2.0 * log_sigma)

    def simulate_predictive(self, theta, rng) -> NormalSample:
        mu = float(theta[0])
        sigma = exp(float(theta[1]))
        return NormalSample(rng.normal(mu, sigma, size=self.n_observations), _validate=False)

    def discrepancy(self, data, theta) -> float:
        return newcomb_discrepancy(self.as_sample(data), float(theta[0]))

    def initial_point(self, data) -> np.ndarray:
        sample = self.as_sample(data)
        return np.array([sample.values.mean(), np.log(sample.values.std(ddof=1))])

    def per_datum_moments(self, theta, data):
        sample = self.as_sample(data)
        mu = float(theta[0])
        sigma2 = float(np.exp(2.0 * theta[1]))
        n = sample.n
        return np.full(n, mu), np.full(n, sigma2)


def load_real_vector(path) -> np.ndarray:
    """Read one real value per line; blank lines and ``#`` comments ignored."""
    values = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(float(text))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: not a number: {text!r}") from exc
    if not values:
        raise ValueError(f"{path}: no data found")
    return np.array(values)


def load_newcomb() -> NormalSample:
    """The canonical 66 speed-of-light deviations shipped with the package."""
    with resources.as_file(resources.files("cpppkit") / "data" / "newcomb.txt") as path:
        values = load_real_vector(path)
    if values.size != 66:
        raise AssertionError(f"packaged dataset should have 66 values, found {values.size}")
    return NormalSample(values)
