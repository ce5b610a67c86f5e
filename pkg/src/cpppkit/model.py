"""The contract a Bayesian model must satisfy to be checked.

A model bundles four capabilities: an unnormalized log posterior, a
posterior-predictive dataset simulator, a discrepancy function, and an
initial parameter point. Parameters with bounded support are expected to
live on an unconstrained scale (log, logit) with the Jacobian folded into
the log posterior, so random-walk proposals stay valid. Discrete latent
states are not part of the parameter vector; models marginalize them
inside the log posterior and simulate them only inside the predictive
simulator.
"""

from __future__ import annotations

import abc
import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParamPoint",
    "DiscrepancySeries",
    "BayesianModel",
    "EvaluationError",
    "CheckOutcome",
    "ModelDiagnostics",
    "discrepancy_diff",
    "validate_model",
    "chi2_discrepancy",
    "payload_digest",
]


class EvaluationError(RuntimeError):
    """A model callback produced a non-finite or malformed value."""


@dataclass(frozen=True)
class ParamPoint:
    """A named parameter vector, possibly on a transformed scale."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if values.ndim != 1:
            raise ValueError(f"parameter values must be one-dimensional, got shape {values.shape}")
        if len(self.names) != values.size:
            raise ValueError(
                f"{len(self.names)} names for {values.size} values"
            )
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"parameter names must be unique, got {self.names}")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must all be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class DiscrepancySeries:
    """Ordered series of replicated-minus-observed discrepancies.

    Entry i is D(y_rep_i, theta_i) - D(y, theta_i) for the i-th retained
    MCMC draw; the order of the chain is preserved. Construction enforces
    finiteness so downstream thresholding never sees NaNs.
    """

    values: np.ndarray
    source: str = "real"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a discrepancy series needs at least one entry")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise EvaluationError(f"non-finite discrepancy difference at index {bad}")

    def __len__(self) -> int:
        return int(self.values.size)


class BayesianModel(abc.ABC):
    """Capability bundle for posterior predictive checking.

    Implementations must be immutable after construction: a single
    instance is shared read-only across concurrent calibration workers.
    Dataset objects are model-specific; the only requirement is that
    ``simulate_predictive`` output is accepted by ``discrepancy`` and
    ``log_posterior``.
    """

    param_names: tuple[str, ...] = ()

    @property
    def parameter_dimension(self) -> int:
        return len(self.param_names)

    @abc.abstractmethod
    def log_posterior(self, theta: np.ndarray, data) -> float:
        """Unnormalized log posterior density at ``theta`` given ``data``."""

    @abc.abstractmethod
    def simulate_predictive(self, theta: np.ndarray, rng: np.random.Generator):
        """Draw one dataset from the predictive distribution at ``theta``."""

    @abc.abstractmethod
    def discrepancy(self, data, theta: np.ndarray) -> float:
        """Scalar measure of disagreement between ``data`` and the model at ``theta``."""

    @abc.abstractmethod
    def initial_point(self, data) -> np.ndarray:
        """A parameter vector with finite log posterior, used to start chains."""


def discrepancy_diff(y_star, theta: np.ndarray, y, model: BayesianModel) -> float:
    """D(y_star, theta) - D(y, theta) for a single parameter point."""
    d_rep = float(model.discrepancy(y_star, theta))
    d_obs = float(model.discrepancy(y, theta))
    value = d_rep - d_obs
    if not np.isfinite(value):
        raise EvaluationError(
            f"discrepancy difference is not finite (replicated={d_rep}, observed={d_obs})"
        )
    return value


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    message: str = ""


@dataclass
class ModelDiagnostics:
    checks: list[CheckOutcome] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckOutcome]:
        return [c for c in self.checks if not c.passed]


def validate_model(model: BayesianModel, data, rng: np.random.Generator) -> ModelDiagnostics:
    """Run cheap sanity checks on a model/data pair.

    Failures are reported in the diagnostics object, never raised, so a
    driver can surface all problems at once.
    """
    diagnostics = ModelDiagnostics()

    def record(name, fn):
        try:
            message = fn()
            diagnostics.checks.append(CheckOutcome(name, True, message or "ok"))
        except Exception as exc:  # noqa: BLE001 - diagnostics, not control flow
            diagnostics.checks.append(CheckOutcome(name, False, f"{type(exc).__name__}: {exc}"))

    state = {}

    def check_dimension():
        init = np.asarray(model.initial_point(data), dtype=float)
        state["init"] = init
        if init.ndim != 1 or init.size != model.parameter_dimension:
            raise ValueError(
                f"initial point has shape {init.shape}, expected ({model.parameter_dimension},)"
            )
        return f"dimension {init.size}"

    def check_log_posterior():
        init = state["init"]
        lp = float(model.log_posterior(init, data))
        if not np.isfinite(lp):
            raise ValueError(f"log posterior at initial point is {lp}")
        return f"log posterior {lp:.6g}"

    def check_round_trip():
        init = state["init"]
        simulated = model.simulate_predictive(init, rng)
        value = discrepancy_diff(simulated, init, data, model)
        return f"simulate/discrepancy round trip gave {value:.6g}"

    record("parameter_dimension", check_dimension)
    if "init" in state:
        record("log_posterior_finite", check_log_posterior)
        record("simulate_round_trip", check_round_trip)
    return diagnostics


def chi2_discrepancy(y, theta: np.ndarray, model) -> float:
    """Generalized chi-squared discrepancy.

    Requires the model to expose ``per_datum_moments(theta, data)``
    returning per-observation conditional means and variances aligned
    with the observation vector.
    """
    means, variances = model.per_datum_moments(theta, y)
    obs = np.asarray(getattr(y, "values", y), dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0.0):
        raise ValueError("chi2 discrepancy needs strictly positive conditional variances")
    return float(np.sum((obs - means) ** 2 / variances))


def payload_digest(data) -> str:
    """Short stable hash of a dataset payload, for provenance records."""
    digest_bytes = getattr(data, "digest_bytes", None)
    if callable(digest_bytes):
        raw = digest_bytes()
    else:
        raw = np.ascontiguousarray(np.asarray(getattr(data, "values", data))).tobytes()
    return hashlib.sha1(raw).hexdigest()[:12]
