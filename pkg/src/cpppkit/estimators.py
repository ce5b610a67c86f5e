"""Estimator-style front end so checks compose with the sklearn ecosystem.

Both classes follow the usual conventions: constructor arguments are
stored verbatim (so ``get_params``/``set_params``/``clone`` work), all
work happens in ``fit``, and fitted results live in trailing-underscore
attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .calibration import CalibrationPlan, EssTarget, FixedLength, orchestrate
from .sampling import ChainSpec, posterior_predictive_stream, run_rw_metropolis
from .pvalues import estimate_ppp
from .uncertainty import (
    TransferTable,
    annotate_tau,
    bootstrap_mbb,
    bootstrap_normal,
    confidence_interval,
    plugin_variance,
)

__all__ = ["PosteriorPredictiveCheck", "CalibratedPredictiveCheck"]


def _resolve_seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise TypeError(f"random_state must be an int or None, got {type(random_state).__name__}")


class PosteriorPredictiveCheck(BaseEstimator):
    """Posterior predictive p-value of a model on a dataset.

    Parameters
    ----------
    model : BayesianModel
        The capability bundle to check.
    n_samples : int
        Retained MCMC draws for the observed-data chain.
    burn_in : int
        Discarded warm-up draws; adaptation happens here when enabled.
    proposal_scales : sequence of float or None
        Initial per-parameter random-walk scales (ones when None).
    adapt : bool
        Tune scales toward ``adapt_target_rate`` during burn-in.
    random_state : int or None
        Master seed; drawn fresh (and recorded) when None.
    """

    def __init__(
        self,
        model,
        *,
        n_samples: int = 4000,
        burn_in: int = 1000,
        proposal_scales=None,
        adapt: bool = True,
        adapt_target_rate: float = 0.44,
        random_state=None,
    ):
        self.model = model
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.proposal_scales = proposal_scales
        self.adapt = adapt
        self.adapt_target_rate = adapt_target_rate
        self.random_state = random_state

    def fit(self, data, y=None):
        seed = _resolve_seed(self.random_state)
        self.master_seed_ = seed
        scales = self.proposal_scales
        if scales is None:
            scales = (1.0,) * self.model.parameter_dimension
        spec = ChainSpec(
            n_iterations=self.n_samples,
            proposal_scales=tuple(scales),
            burn_in=self.burn_in,
            adapt=self.adapt,
            adapt_target_rate=self.adapt_target_rate,
        )
        streams = np.random.SeedSequence(seed).spawn(2)
        init = self.model.initial_point(data)
        chain = run_rw_metropolis(self.model, data, init, spec, np.random.default_rng(streams[0]))
        deltas = posterior_predictive_stream(
            self.model, chain, data, np.random.default_rng(streams[1])
        )
        estimate = estimate_ppp(deltas, variant="plain")
        self.chain_ = chain
        self.deltas_ = deltas
        self.ppp_ = estimate.value
        self.k_ = estimate.k
        self.m_ = estimate.m
        self.ess_ = estimate.ess
        self.tau_ = estimate.tau
        return self

    def _check_fitted(self):
        if not hasattr(self, "ppp_"):
            raise NotFittedError("call fit(data) first")


class CalibratedPredictiveCheck(BaseEstimator):
    """Calibrated posterior predictive p-value with Monte Carlo error bars.

    Runs the observed-data chain, refits short chains on calibration
    replicates drawn from the predictive stream, and attaches the
    requested variance estimates. ``replicate_chain_length=None`` selects
    the adaptive stopping rule targeting ``ess_target`` effective draws
    of each replicate's indicator chain.
    """

    def __init__(
        self,
        model,
        *,
        n_replicates: int = 100,
        replicate_chain_length: int | None = None,
        ess_target: float = 100.0,
        max_replicate_iterations: int | None = None,
        thinning: str = "systematic",
        n_samples: int | None = None,
        burn_in: int = 1000,
        proposal_scales=None,
        adapt: bool = True,
        adapt_target_rate: float = 0.44,
        uncertainty=("plugin",),
        n_bootstrap: int = 100,
        block_length: int | None = None,
        tau_buffer: float = 1.0,
        ci_level: float = 0.95,
        workers: int = 1,
        random_state=None,
    ):
        self.model = model
        self.n_replicates = n_replicates
        self.replicate_chain_length = replicate_chain_length
        self.ess_target = ess_target
        self.max_replicate_iterations = max_replicate_iterations
        self.thinning = thinning
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.proposal_scales = proposal_scales
        self.adapt = adapt
        self.adapt_target_rate = adapt_target_rate
        self.uncertainty = uncertainty
        self.n_bootstrap = n_bootstrap
        self.block_length = block_length
        self.tau_buffer = tau_buffer
        self.ci_level = ci_level
        self.workers = workers
        self.random_state = random_state

    def _plan(self, seed: int) -> CalibrationPlan:
        if self.replicate_chain_length is not None:
            policy = FixedLength(self.replicate_chain_length)
        else:
            policy = EssTarget(
                target=self.ess_target, max_iterations=self.max_replicate_iterations
            )
        return CalibrationPlan(
            n_replicates=self.n_replicates,
            chain_length=policy,
            thinning=self.thinning,
            master_seed=seed,
            workers=self.workers,
        )

    def _resolved_n_samples(self) -> int:
        if self.n_samples is not None:
            return int(self.n_samples)
        if self.replicate_chain_length is not None:
            return max(1000, 10 * int(self.replicate_chain_length))
        return 5000

    def fit(self, data, y=None):
        seed = _resolve_seed(self.random_state)
        self.master_seed_ = seed
        scales = self.proposal_scales
        if scales is None:
            scales = (1.0,) * self.model.parameter_dimension
        spec = ChainSpec(
            n_iterations=self._resolved_n_samples(),
            proposal_scales=tuple(scales),
            burn_in=self.burn_in,
            adapt=self.adapt,
            adapt_target_rate=self.adapt_target_rate,
        )
        plan = self._plan(seed)
        estimate = orchestrate(self.model, data, spec, plan)

        self.result_ = estimate
        self.cppp_ = estimate.value
        self.ppp_ = estimate.ppp_y
        self.replicates_ = estimate.replicates
        self.transfer_table_ = TransferTable.from_series(
            estimate.real_deltas, tau_buffer=self.tau_buffer
        )
        annotate_tau(estimate.replicates, self.transfer_table_)

        methods = (self.uncertainty,) if isinstance(self.uncertainty, str) else tuple(self.uncertainty)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        self.variance_estimates_ = {}
        for method in methods:
            if method == "plugin":
                est = plugin_variance(estimate.replicates, estimate.ppp_y, self.transfer_table_)
            elif method == "mbb":
                est = bootstrap_mbb(
                    estimate.replicates, estimate.ppp_y, self.n_bootstrap, self.block_length, rng
                )
            elif method == "normal":
                est = bootstrap_normal(
                    estimate.replicates, estimate.ppp_y, self.n_bootstrap, self.transfer_table_, rng
                )
            else:
                raise ValueError(f"unknown uncertainty method {method!r}")
            confidence_interval(estimate.value, est, self.ci_level)
            self.variance_estimates_[est.method] = est

        first = next(iter(self.variance_estimates_.values()), None)
        self.se_ = first.se if first else None
        self.ci_ = first.ci if first else None
        return self

    def decision(self, threshold: float = 0.05) -> str:
        """One-line verdict from the first interval against a rejection threshold."""
        if not hasattr(self, "cppp_"):
            raise NotFittedError("call fit(data) first")
        if self.ci_ is None:
            return "no interval computed"
        lo, hi = self.ci_
        if lo > threshold:
            return f"no evidence against model (CI lower bound {lo:.3f} > {threshold})"
        if hi < threshold:
            return f"model rejected (CI upper bound {hi:.3f} < {threshold})"
        return f"inconclusive at threshold {threshold} (CI [{lo:.3f}, {hi:.3f}])"
