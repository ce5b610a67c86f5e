"""Calibrated posterior predictive p-values at practical cost.

Posterior predictive p-values are easy to compute but are not uniform
under a well-specified model, so their scale is hard to interpret. The
calibrated version recovers an interpretable p-value by refitting the
model on replicates drawn from the posterior predictive distribution.
This package makes that affordable: replicate chains are kept short,
their mixing is borrowed from the long observed-data chain, the Monte
Carlo error of the calibrated value is estimated (plug-in or bootstrap),
and a Beta-Binomial planner chooses how to split a compute budget
between replicates and chain length.
"""

from .calibration import (
    CalibrationPlan,
    CpppEstimate,
    EssTarget,
    FixedLength,
    ReplicateResult,
    cost_model,
    cppp_hat,
    orchestrate,
)
from .capture_recapture import CaptureHistoryMatrix, CjsModel, CJSParams, load_capture_histories
from .distributions import BetaParams
from .estimators import CalibratedPredictiveCheck, PosteriorPredictiveCheck
from .model import BayesianModel, DiscrepancySeries, ParamPoint, validate_model
from .newcomb import NewcombModel, NormalSample, load_newcomb
from .pvalues import IndicatorChain, PppEstimate, ess_batch_means, estimate_ppp, ppp_hat
from .sampling import ChainSpec, PosteriorChain, run_conjugate_normal, run_rw_metropolis
from .scenarios import ScenarioSpec, scenario_grid, scenario_simulate
from .uncertainty import (
    TransferTable,
    VarianceEstimate,
    bootstrap_mbb,
    bootstrap_normal,
    confidence_interval,
    plugin_variance,
)

__version__ = "0.1.0"

__all__ = [
    "BayesianModel",
    "BetaParams",
    "CalibratedPredictiveCheck",
    "CalibrationPlan",
    "CaptureHistoryMatrix",
    "ChainSpec",
    "CjsModel",
    "CJSParams",
    "CpppEstimate",
    "DiscrepancySeries",
    "EssTarget",
    "FixedLength",
    "IndicatorChain",
    "NewcombModel",
    "NormalSample",
    "ParamPoint",
    "PosteriorChain",
    "PosteriorPredictiveCheck",
    "PppEstimate",
    "ReplicateResult",
    "ScenarioSpec",
    "TransferTable",
    "VarianceEstimate",
    "bootstrap_mbb",
    "bootstrap_normal",
    "confidence_interval",
    "cost_model",
    "cppp_hat",
    "ess_batch_means",
    "estimate_ppp",
    "load_capture_histories",
    "load_newcomb",
    "orchestrate",
    "plugin_variance",
    "ppp_hat",
    "run_conjugate_normal",
    "run_rw_metropolis",
    "scenario_grid",
    "scenario_simulate",
    "validate_model",
]
