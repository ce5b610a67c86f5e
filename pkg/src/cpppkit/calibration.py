"""Calibrated p-value pipeline: replicate draws, short refits, aggregation.

The observed-data chain supplies predictive (dataset, parameter) pairs.
A subset of those pairs become calibration replicates; each is refit by
a short chain started at the parameter that generated it (so no burn-in
is needed), and the calibrated p-value is the fraction of replicates
whose extreme-discrepancy count falls at or below the observed rate.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import ceil, floor

import numpy as np

from ._validation import as_generator, check_probability
from .model import (
    BayesianModel,
    DiscrepancySeries,
    ParamPoint,
    payload_digest,
    validate_model,
)
from .pvalues import PppEstimate, ess_batch_means, estimate_ppp
from .sampling import ChainSpec, PosteriorChain, posterior_predictive_stream, run_rw_metropolis

__all__ = [
    "FixedLength",
    "EssTarget",
    "CalibrationPlan",
    "ReplicateResult",
    "CpppEstimate",
    "RealDataStage",
    "thinning_indices",
    "draw_calibration_replicates",
    "run_replicate",
    "cppp_hat",
    "count_threshold",
    "prepare_real_stage",
    "calibrate",
    "orchestrate",
    "cost_model",
]


@dataclass(frozen=True)
class FixedLength:
    """Run every replicate chain for exactly ``n_iterations`` draws."""

    n_iterations: int

    def __post_init__(self):
        if int(self.n_iterations) < 10:
            raise ValueError(
                f"fixed replicate length must be >= 10, got {self.n_iterations}"
            )


@dataclass(frozen=True)
class EssTarget:
    """Extend each replicate chain until its indicator ESS reaches ``target``.

    Extension happens in increments of ``increment`` iterations. When
    ``max_iterations`` is hit first, the replicate is flagged short, not
    failed. ``max_iterations=None`` lets the orchestrator derive a bound
    from the observed-data chain's mixing.
    """

    target: float = 100.0
    max_iterations: int | None = None
    increment: int = 100

    def __post_init__(self):
        if not 50.0 <= float(self.target) <= 200.0:
            raise ValueError(f"ess target must be within [50, 200], got {self.target}")
        if int(self.increment) < 10:
            raise ValueError(f"increment must be >= 10, got {self.increment}")
        if self.max_iterations is not None and int(self.max_iterations) < self.increment:
            raise ValueError(
                f"max_iterations={self.max_iterations} is below one increment of {self.increment}"
            )


@dataclass(frozen=True)
class CalibrationPlan:
    """How many replicates to draw and how long to run each refit."""

    n_replicates: int = 100
    chain_length: FixedLength | EssTarget = EssTarget()
    thinning: str = "systematic"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if int(self.n_replicates) < 1:
            raise ValueError(f"n_replicates must be >= 1, got {self.n_replicates}")
        if self.thinning not in ("systematic", "random"):
            raise ValueError(f"thinning must be 'systematic' or 'random', got {self.thinning!r}")
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not isinstance(self.chain_length, (FixedLength, EssTarget)):
            raise ValueError("chain_length must be a FixedLength or EssTarget policy")


@dataclass
class ReplicateResult:
    """Everything retained about one calibration replicate.

    The discrepancy series is kept so block bootstrap can resample it
    later; ``tau_hat``/``ess_hat`` stay None until an uncertainty
    estimator fills them in.
    """

    index: int
    generating_theta: ParamPoint
    data_digest: str
    n_iterations: int
    count: int
    ppp_hat: float
    deltas: DiscrepancySeries = field(repr=False)
    seed_key: int = 0
    ess_short: bool = False
    tau_hat: float | None = None
    ess_hat: float | None = None


@dataclass
class CpppEstimate:
    """Calibrated p-value with the evidence that produced it."""

    value: float
    n_replicates: int
    replicates: list[ReplicateResult]
    ppp_y: float
    plan: CalibrationPlan | None = None
    wall_time: float = 0.0
    real_ppp: PppEstimate | None = None
    real_deltas: DiscrepancySeries | None = None
    real_chain: PosteriorChain | None = None


def thinning_indices(m: int, r: int, thinning: str, rng) -> np.ndarray:
    """Positions in the predictive pair stream that become replicates.

    Systematic thinning takes round(j * m / r) for j = 1..r (1-based,
    shifted to 0-based); random thinning samples without replacement.
    Either way the result is sorted and duplicate-free.
    """
    m = int(m)
    r = int(r)
    if r > m:
        raise ValueError(f"cannot draw {r} replicates from a stream of length {m}")
    if thinning == "systematic":
        raw = np.round(np.arange(1, r + 1) * (m / r)).astype(int) - 1
        raw = np.clip(raw, 0, m - 1)
        if np.any(np.diff(raw) <= 0):
            raise AssertionError("systematic thinning produced duplicate indices")
        return raw
    if thinning == "random":
        rng, _ = as_generator(rng)
        return np.sort(rng.choice(m, size=r, replace=False))
    raise ValueError(f"unknown thinning {thinning!r}")


def draw_calibration_replicates(pairs, r: int, thinning: str, rng) -> list:
    """Select r (dataset, theta) pairs from a predictive pair stream."""
    pairs = list(pairs)
    idx = thinning_indices(len(pairs), r, thinning, rng)
    return [pairs[i] for i in idx]


def run_replicate(
    model: BayesianModel,
    replicate_data,
    generating_theta,
    policy: FixedLength | EssTarget,
    rng,
    *,
    proposal_scales,
    index: int = 0,
    seed_key: int = 0,
) -> ReplicateResult:
    """Refit one calibration replicate with a short chain.

    The chain starts at the parameter vector that generated the replicate
    data, so it begins in the posterior region of interest and uses no
    burn-in. Under an ESS-target policy the chain is extended segment by
    segment until the indicator chain's batch-means ESS reaches the
    target or the iteration cap is hit (flagged ``ess_short``).
    """
    rng, _ = as_generator(rng)
    theta = np.array(generating_theta, dtype=float).ravel()

    if isinstance(policy, FixedLength):
        segments = [int(policy.n_iterations)]
        target = None
        cap = int(policy.n_iterations)
    else:
        target = float(policy.target)
        if policy.max_iterations is None:
            raise ValueError("EssTarget.max_iterations must be resolved before running")
        cap = int(policy.max_iterations)
        segments = None

    delta_parts: list[np.ndarray] = []
    total = 0
    ess_short = False
    current = theta

    def run_segment(length: int):
        nonlocal current, total
        spec = ChainSpec(
            n_iterations=length,
            proposal_scales=tuple(proposal_scales),
            burn_in=0,
            adapt=False,
        )
        chain = run_rw_metropolis(model, replicate_data, current, spec, rng)
        series = posterior_predictive_stream(
            model, chain, replicate_data, rng, source="replicate"
        )
        current = np.array(chain.draws[-1])
        delta_parts.append(series.values)
        total += length

    if segments is not None:
        for length in segments:
            run_segment(length)
    else:
        increment = int(policy.increment)
        while True:
            length = min(increment, cap - total)
            if length <= 0:
                ess_short = True
                break
            run_segment(length)
            bits = (np.concatenate(delta_parts) >= 0.0).astype(np.uint8)
            if ess_batch_means(bits).ess >= target:
                break

    values = np.concatenate(delta_parts)
    deltas = DiscrepancySeries(values, source="replicate")
    count = int(np.sum(values >= 0.0))
    names = tuple(model.param_names) or tuple(f"theta_{i}" for i in range(theta.size))
    return ReplicateResult(
        index=index,
        generating_theta=ParamPoint(names, theta),
        data_digest=payload_digest(replicate_data),
        n_iterations=total,
        count=count,
        ppp_hat=(count + 0.5) / (total + 1),
        deltas=deltas,
        seed_key=seed_key,
        ess_short=ess_short,
    )


def count_threshold(ppp_y: float, n_iterations: int) -> int:
    """Largest integer count consistent with a replicate p-value <= ppp_y.

    The float ``ppp_y`` is first snapped to the shortest rational within
    one part in 10^12 (recovering values like 206/1000 or 1/3 exactly),
    then compared in exact rational arithmetic, so counts that tie the
    threshold are always counted as inside.
    """
    exact = Fraction(ppp_y).limit_denominator(10**12)
    return int(floor(exact * int(n_iterations)))


def cppp_hat(results, ppp_y: float, *, plan: CalibrationPlan | None = None) -> CpppEstimate:
    """Aggregate replicate counts into the calibrated p-value.

    The estimate is the fraction of replicates with count at or below
    chain_length * ppp_y, equality included; its value is always a
    multiple of 1/r.
    """
    results = list(results)
    if not results:
        raise ValueError("need at least one replicate result")
    ppp_y = check_probability(ppp_y, "ppp_y")
    inside = sum(1 for res in results if res.count <= count_threshold(ppp_y, res.n_iterations))
    return CpppEstimate(
        value=inside / len(results),
        n_replicates=len(results),
        replicates=results,
        ppp_y=ppp_y,
        plan=plan,
    )


@dataclass
class RealDataStage:
    """Observed-data chain artifacts reused by every calibration run."""

    chain: PosteriorChain
    deltas: DiscrepancySeries
    ppp: PppEstimate
    pairs: list
    proposal_scales: tuple[float, ...]


def prepare_real_stage(
    model: BayesianModel,
    data,
    spec: ChainSpec | None,
    rng,
    *,
    chain: PosteriorChain | None = None,
) -> RealDataStage:
    """Run the observed-data chain and its predictive pass.

    The full stream of predictive (dataset, theta) pairs is retained so
    independent calibration runs can subsample it without re-simulating.
    A pre-built chain (for instance from an exact sampler) can be passed
    instead of a spec.
    """
    rng, _ = as_generator(rng)
    if chain is None:
        if spec is None:
            raise ValueError("either a ChainSpec or a pre-built chain is required")
        init = model.initial_point(data)
        chain = run_rw_metropolis(model, data, init, spec, rng)
    deltas, pairs = posterior_predictive_stream(
        model, chain, data, rng, collect_indices=range(len(chain)), source="real"
    )
    ppp = estimate_ppp(deltas, variant="plain")
    scales = chain.final_scales or (1.0,) * model.parameter_dimension
    return RealDataStage(
        chain=chain, deltas=deltas, ppp=ppp, pairs=pairs, proposal_scales=scales
    )


def resolve_policy(plan: CalibrationPlan, stage: RealDataStage) -> FixedLength | EssTarget:
    """Fill in the ESS-target iteration cap from the observed chain's mixing."""
    policy = plan.chain_length
    if isinstance(policy, EssTarget) and policy.max_iterations is None:
        from .uncertainty import TransferTable

        table = TransferTable.from_series(stage.deltas)
        cap = int(ceil(10.0 * policy.target * table.tau(0.5)))
        cap = max(cap, policy.increment)
        policy = replace(policy, max_iterations=cap)
    return policy


def calibrate(model: BayesianModel, stage: RealDataStage, plan: CalibrationPlan) -> CpppEstimate:
    """Run the calibration stage against a prepared observed-data stage.

    Per-replicate generator streams are derived from the plan's master
    seed by counter-based spawning, and results are assembled by
    replicate index, so the estimate is bit-identical for any worker
    count.
    """
    start = time.perf_counter()
    m = len(stage.pairs)
    root = np.random.SeedSequence(plan.master_seed)
    streams = root.spawn(plan.n_replicates + 1)

    idx = thinning_indices(m, plan.n_replicates, plan.thinning, np.random.default_rng(streams[0]))
    selected = [stage.pairs[i] for i in idx]
    policy = resolve_policy(plan, stage)

    def worker(j: int) -> ReplicateResult:
        y_rep, theta_gen = selected[j]
        try:
            return run_replicate(
                model,
                y_rep,
                theta_gen,
                policy,
                np.random.default_rng(streams[j + 1]),
                proposal_scales=stage.proposal_scales,
                index=j,
                seed_key=j,
            )
        except Exception as exc:
            raise RuntimeError(f"calibration replicate {j} failed: {exc}") from exc

    if plan.workers == 1:
        results = [worker(j) for j in range(plan.n_replicates)]
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(worker, range(plan.n_replicates)))

    estimate = cppp_hat(results, stage.ppp.value, plan=plan)
    estimate.wall_time = time.perf_counter() - start
    estimate.real_ppp = stage.ppp
    estimate.real_deltas = stage.deltas
    estimate.real_chain = stage.chain
    return estimate


def orchestrate(
    model: BayesianModel,
    data,
    real_chain_spec: ChainSpec,
    plan: CalibrationPlan,
) -> CpppEstimate:
    """End-to-end calibrated check: observed chain, replicates, estimate.

    The observed-data chain and the calibration stage draw from streams
    derived from the plan's master seed, so the whole run is reproducible
    from (model, data, spec, plan) alone.
    """
    root = np.random.SeedSequence(plan.master_seed).spawn(2)
    diag_rng = np.random.default_rng(np.random.SeedSequence(plan.master_seed, spawn_key=(99,)))
    diagnostics = validate_model(model, data, diag_rng)
    if not diagnostics.ok:
        problems = "; ".join(f"{c.name}: {c.message}" for c in diagnostics.failures())
        raise ValueError(f"model validation failed: {problems}")
    start = time.perf_counter()
    stage = prepare_real_stage(model, data, real_chain_spec, np.random.default_rng(root[0]))
    inner_plan = replace(plan, master_seed=int(np.random.default_rng(root[1]).integers(2**63)))
    estimate = calibrate(model, stage, inner_plan)
    estimate.plan = plan
    estimate.wall_time = time.perf_counter() - start
    return estimate


def cost_model(r: int, m_tilde: int, m: int, t_ppp_seconds: float) -> float:
    """Predicted calibration wall time from the observed-analysis time.

    Posterior sampling dominates, so the calibration stage costs
    (r * m_tilde / m) times the observed-data analysis.
    """
    for name, value in (("r", r), ("m_tilde", m_tilde), ("m", m), ("t_ppp_seconds", t_ppp_seconds)):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return (r * m_tilde / m) * t_ppp_seconds
