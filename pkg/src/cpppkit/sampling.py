"""Posterior sampling: componentwise random-walk Metropolis and helpers.

The sampler produces the parameter draws and the posterior-predictive
discrepancy stream that the p-value estimators consume. One sampler run
is single-threaded; many runs may execute concurrently on independent
generator streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator
from .model import BayesianModel, DiscrepancySeries, EvaluationError, ParamPoint

__all__ = [
    "ChainSpec",
    "PosteriorChain",
    "run_rw_metropolis",
    "run_conjugate_normal",
    "posterior_predictive_stream",
]

_ADAPT_BATCH = 50


@dataclass(frozen=True)
class ChainSpec:
    """Configuration of one random-walk Metropolis run.

    ``n_iterations`` counts retained draws (after ``burn_in``). When
    ``adapt`` is on, proposal scales are tuned during burn-in only, with
    diminishing adjustments, and frozen afterwards.
    """

    n_iterations: int
    proposal_scales: tuple[float, ...]
    burn_in: int = 0
    adapt: bool = False
    adapt_target_rate: float = 0.44

    def __post_init__(self):
        if int(self.n_iterations) < 1:
            raise ValueError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if int(self.burn_in) < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        scales = tuple(float(s) for s in np.atleast_1d(self.proposal_scales))
        object.__setattr__(self, "proposal_scales", scales)
        if any(not np.isfinite(s) or s <= 0.0 for s in scales):
            raise ValueError(f"proposal scales must be positive, got {scales}")
        if not 0.0 < self.adapt_target_rate < 1.0:
            raise ValueError(
                f"adapt_target_rate must be in (0, 1), got {self.adapt_target_rate}"
            )


@dataclass(frozen=True)
class PosteriorChain:
    """Retained draws of one sampler run, immutable once returned."""

    draws: np.ndarray
    names: tuple[str, ...]
    acceptance_rate: float
    spec: ChainSpec
    seed: int | None = None
    final_scales: tuple[float, ...] = ()
    accept_counts: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.draws.shape[0])

    def point(self, i: int) -> ParamPoint:
        return ParamPoint(self.names, self.draws[i])


def run_rw_metropolis(
    model: BayesianModel,
    data,
    init,
    spec: ChainSpec,
    rng,
) -> PosteriorChain:
    """Sample the posterior with one-at-a-time Gaussian random-walk updates.

    Updates cycle through components in order; acceptance is counted per
    component move over the retained phase. All proposal noise and
    acceptance uniforms are pre-drawn so the same seed reproduces the
    chain bit for bit regardless of the acceptance pattern.
    """
    rng, seed = as_generator(rng)
    theta = np.array(init, dtype=float).ravel()
    d = theta.size
    if d != model.parameter_dimension:
        raise ValueError(
            f"initial point has {d} components, model expects {model.parameter_dimension}"
        )
    scales = np.asarray(spec.proposal_scales, dtype=float)
    if scales.size == 1 and d > 1:
        scales = np.full(d, scales[0])
    if scales.size != d:
        raise ValueError(f"{scales.size} proposal scales for {d} parameters")

    log_post = model.log_posterior
    lp = float(log_post(theta, data))
    if not np.isfinite(lp):
        raise ValueError(f"log posterior at the initial point is {lp}")

    burn = int(spec.burn_in)
    keep = int(spec.n_iterations)
    total = burn + keep
    # Two derived substreams keep the noise/uniform sequences independent
    # of the chain length, so a longer run shares its prefix with a
    # shorter one under the same seed.
    noise_rng = np.random.default_rng(int(rng.integers(2**63)))
    unif_rng = np.random.default_rng(int(rng.integers(2**63)))
    noise = noise_rng.standard_normal((total, d))
    with np.errstate(divide="ignore"):
        log_unif = np.log(unif_rng.random((total, d)))

    draws = np.empty((keep, d))
    accept_counts = np.zeros(keep, dtype=np.uint8)
    retained_accepts = 0

    adapting = spec.adapt and burn > 0
    log_scales = np.log(scales)
    batch_accepts = np.zeros(d)
    batch_number = 0

    for t in range(total):
        row_noise = noise[t]
        row_unif = log_unif[t]
        accepted_here = 0
        for c in range(d):
            old = theta[c]
            theta[c] = old + scales[c] * row_noise[c]
            lp_new = float(log_post(theta, data))
            if row_unif[c] < lp_new - lp:
                lp = lp_new
                accepted_here += 1
                if adapting and t < burn:
                    batch_accepts[c] += 1.0
            else:
                theta[c] = old
        if adapting and t < burn:
            if (t + 1) % _ADAPT_BATCH == 0 or t + 1 == burn:
                batch_number += 1
                window = _ADAPT_BATCH if (t + 1) % _ADAPT_BATCH == 0 else (t + 1) % _ADAPT_BATCH
                step = min(0.25, 1.0 / np.sqrt(batch_number))
                rates = batch_accepts / window
                log_scales += np.where(rates > spec.adapt_target_rate, step, -step)
                scales = np.exp(log_scales)
                batch_accepts[:] = 0.0
        if t >= burn:
            i = t - burn
            draws[i] = theta
            accept_counts[i] = accepted_here
            retained_accepts += accepted_here

    names = tuple(model.param_names) or tuple(f"theta_{i}" for i in range(d))
    return PosteriorChain(
        draws=draws,
        names=names,
        acceptance_rate=retained_accepts / (keep * d),
        spec=spec,
        seed=seed,
        final_scales=tuple(float(s) for s in scales),
        accept_counts=accept_counts,
    )


def run_conjugate_normal(data, m: int, rng, names=("mu", "log_sigma")) -> PosteriorChain:
    """Exact posterior draws for the normal model with a flat prior on (mu, log sigma).

    Produces independent draws: the variance comes from its scaled
    inverse-chi-squared marginal and the mean from its conditional
    normal. Useful as an exact-sampling baseline that isolates MCMC error
    in tests.
    """
    rng, seed = as_generator(rng)
    y = np.asarray(getattr(data, "values", data), dtype=float).ravel()
    if y.size < 2:
        raise ValueError(f"need at least two observations, got {y.size}")
    m = int(m)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    n = y.size
    ybar = float(y.mean())
    s2 = float(y.var(ddof=1))
    sigma2 = (n - 1) * s2 / rng.chisquare(n - 1, size=m)
    mu = rng.normal(ybar, np.sqrt(sigma2 / n))
    draws = np.column_stack([mu, 0.5 * np.log(sigma2)])
    spec = ChainSpec(n_iterations=m, proposal_scales=(1.0, 1.0))
    return PosteriorChain(
        draws=draws,
        names=tuple(names),
        acceptance_rate=1.0,
        spec=spec,
        seed=seed,
        final_scales=(1.0, 1.0),
    )


def posterior_predictive_stream(
    model: BayesianModel,
    chain: PosteriorChain,
    data,
    rng,
    *,
    collect_indices=None,
    source: str = "real",
) -> DiscrepancySeries | tuple[DiscrepancySeries, list]:
    """Simulate one predictive dataset per draw and record discrepancy differences.

    Output preserves chain order and has one entry per retained draw.
    With ``collect_indices`` given, the simulated (dataset, theta) pairs
    at those positions are also returned, so calibration replicates reuse
    the very same predictive draws that produced the series.
    """
    rng, _ = as_generator(rng)
    n = len(chain)
    if n == 0:
        raise ValueError("chain is empty")
    wanted = None
    collected = None
    if collect_indices is not None:
        wanted = set(int(i) for i in collect_indices)
        collected = {}
    out = np.empty(n)
    discrepancy = model.discrepancy
    simulate = model.simulate_predictive
    draws = chain.draws
    for i in range(n):
        theta = draws[i]
        try:
            y_star = simulate(theta, rng)
            value = float(discrepancy(y_star, theta)) - float(discrepancy(data, theta))
        except EvaluationError as exc:
            raise EvaluationError(f"{exc} (iteration {i})") from exc
        if not np.isfinite(value):
            raise EvaluationError(f"non-finite discrepancy difference at iteration {i}")
        out[i] = value
        if wanted is not None and i in wanted:
            collected[i] = (y_star, np.array(theta))
    series = DiscrepancySeries(out, source=source)
    if wanted is None:
        return series
    pairs = [collected[i] for i in sorted(collected)]
    return series, pairs
