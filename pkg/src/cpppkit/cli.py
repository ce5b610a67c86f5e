"""Command-line interface.

Subcommands: ``ppp`` (observed-data p-value), ``cppp`` (calibrated check
with uncertainty), ``scenario`` (analytic budget planning), ``repeat``
(repeated-run harness for Monte Carlo baselines and coverage), and
``report`` (plot-ready CSV export). Exit codes: 0 success, 1 numeric
failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from importlib import resources

import numpy as np

from .calibration import (
    CalibrationPlan,
    EssTarget,
    FixedLength,
    calibrate,
    prepare_real_stage,
)
from .capture_recapture import CjsModel, load_capture_histories
from .config import ConfigError, RunConfig, ScenarioConfig, parse_assignments, read_config_file
from .distributions import BetaParams
from .model import EvaluationError, validate_model
from .newcomb import NewcombModel, NormalSample, load_newcomb, load_real_vector
from .reporting import (
    cppp_document,
    ensure_outdir,
    ppp_document,
    read_json,
    read_replicate_csv,
    write_chain_csv,
    write_errorbar_csv,
    write_histogram_csv,
    write_json,
    write_r_sweep_csv,
    write_repeat_csv,
    write_replicate_csv,
    write_scenario_csv,
)
from .sampling import ChainSpec, run_rw_metropolis
from .scenarios import ScenarioSpec, scenario_grid, scenario_r_sweep, scenario_simulate
from .uncertainty import (
    TransferTable,
    annotate_tau,
    bootstrap_mbb,
    bootstrap_normal,
    confidence_interval,
    plugin_variance,
)

_PACKAGED_DATA = {"newcomb": "newcomb.txt", "simulated_tt": "simulated_tt.txt"}


def _load_model_and_data(cfg: RunConfig):
    """Resolve the model id and data path into (model, dataset)."""
    if cfg.model == "newcomb":
        if cfg.data is None:
            data = load_newcomb()
        else:
            if not os.path.exists(cfg.data):
                raise ConfigError(f"data file not found: {cfg.data}")
            data = NormalSample(load_real_vector(cfg.data))
        return NewcombModel(n_observations=len(data)), data

    if cfg.model in ("dipper_cc", "dipper_tt"):
        if cfg.data is None:
            raise ConfigError(f"model {cfg.model} requires a capture-history file (data=PATH)")
        if not os.path.exists(cfg.data):
            raise ConfigError(f"data file not found: {cfg.data}")
        data = load_capture_histories(cfg.data)
        return CjsModel.for_data(data, time_varying=cfg.model.endswith("tt")), data

    if cfg.model == "simulated_tt":
        if cfg.data is None:
            with resources.as_file(
                resources.files("cpppkit") / "data" / _PACKAGED_DATA["simulated_tt"]
            ) as path:
                data = load_capture_histories(path)
        else:
            if not os.path.exists(cfg.data):
                raise ConfigError(f"data file not found: {cfg.data}")
            data = load_capture_histories(cfg.data)
        return CjsModel.for_data(data, time_varying=True), data

    raise ConfigError(f"unknown model {cfg.model!r}")


def _resolve_m(cfg: RunConfig) -> int:
    if cfg.m is not None:
        return cfg.m
    if cfg.policy == "fixed" and cfg.m_tilde is not None:
        return max(1000, 10 * cfg.m_tilde)
    return 5000


def _resolve_replicates(cfg: RunConfig) -> int:
    if cfg.c is not None and cfg.policy == "fixed":
        derived = cfg.c // cfg.m_tilde
        if derived < 1:
            raise ConfigError(f"budget c={cfg.c} below one replicate of length {cfg.m_tilde}")
        if cfg.c % cfg.m_tilde:
            print(f"note: budget {cfg.c} not divisible by m_tilde={cfg.m_tilde}; using r={derived}")
        return derived
    return cfg.r


def _real_stage(model, data, cfg: RunConfig, m: int, rng_chain, rng_stage):
    """Run the observed-data chain honoring the mixing preset.

    The good preset adapts proposal scales during burn-in. The bad preset
    first adapts the same way, then multiplies the tuned scales by
    ``bad_scale_factor`` and samples with the detuned frozen kernel, so
    replicate chains inherit the poor mixing.
    """
    init = model.initial_point(data)
    ones = (1.0,) * model.parameter_dimension
    if cfg.mixing == "good":
        spec = ChainSpec(
            n_iterations=m, proposal_scales=ones, burn_in=cfg.burn_in, adapt=True
        )
        return prepare_real_stage(model, data, spec, rng_stage, chain=run_rw_metropolis(
            model, data, init, spec, rng_chain
        ))
    pilot_spec = ChainSpec(
        n_iterations=1, proposal_scales=ones, burn_in=max(cfg.burn_in, 200), adapt=True
    )
    pilot = run_rw_metropolis(model, data, init, pilot_spec, rng_chain)
    detuned = tuple(cfg.bad_scale_factor * s for s in pilot.final_scales)
    spec = ChainSpec(n_iterations=m, proposal_scales=detuned, burn_in=0, adapt=False)
    chain = run_rw_metropolis(model, data, pilot.draws[-1], spec, rng_chain)
    return prepare_real_stage(model, data, spec, rng_stage, chain=chain)


def _plan(cfg: RunConfig, r: int, master_seed: int) -> CalibrationPlan:
    if cfg.policy == "fixed":
        policy = FixedLength(cfg.m_tilde)
    else:
        policy = EssTarget(target=cfg.ess_target, max_iterations=cfg.max_iterations)
    return CalibrationPlan(
        n_replicates=r,
        chain_length=policy,
        thinning=cfg.thinning,
        master_seed=master_seed,
        workers=cfg.workers,
    )


def _uncertainties(estimate, cfg: RunConfig, table: TransferTable, rng):
    annotate_tau(estimate.replicates, table)  # fills tau_hat/ess_hat whatever methods run
    out = []
    for method in cfg.uncertainty:
        if method == "plugin":
            est = plugin_variance(estimate.replicates, estimate.ppp_y, table)
        elif method == "mbb":
            est = bootstrap_mbb(estimate.replicates, estimate.ppp_y, cfg.b, cfg.block_length, rng)
        else:
            est = bootstrap_normal(estimate.replicates, estimate.ppp_y, cfg.b, table, rng)
        confidence_interval(estimate.value, est, cfg.ci_level)
        out.append(est)
    return out


def _derived_seed(seed_seq) -> int:
    return int(np.random.default_rng(seed_seq).integers(2**63))


def _validated(model, data, rng):
    report = validate_model(model, data, rng)
    if not report.ok:
        problems = "; ".join(f"{c.name}: {c.message}" for c in report.failures())
        raise ConfigError(f"model validation failed: {problems}")


def cmd_ppp(cfg: RunConfig) -> int:
    cfg.validate()
    model, data = _load_model_and_data(cfg)
    out = ensure_outdir(cfg.out)
    m = cfg.m if cfg.m is not None else 4000
    root = np.random.SeedSequence(cfg.seed).spawn(3)
    _validated(model, data, np.random.default_rng(root[2]))
    start = time.perf_counter()
    stage = _real_stage(
        model, data, cfg, m, np.random.default_rng(root[0]), np.random.default_rng(root[1])
    )
    seconds = time.perf_counter() - start
    doc = ppp_document(stage.ppp, cfg.echo())
    doc["model"] = cfg.model
    write_json(os.path.join(out, "ppp.json"), doc, timing={"seconds": seconds})
    if cfg.chain_dump:
        write_chain_csv(os.path.join(out, "chain.csv"), stage.chain)
    print(
        f"ppp_hat={stage.ppp.value:.6g} k={stage.ppp.k} m={stage.ppp.m} "
        f"ess={stage.ppp.ess:.6g} tau={stage.ppp.tau:.6g}"
    )
    return 0


def _run_cppp(cfg: RunConfig):
    """Shared ppp+calibration pipeline behind the cppp and repeat commands."""
    model, data = _load_model_and_data(cfg)
    m = _resolve_m(cfg)
    r = _resolve_replicates(cfg)
    root = np.random.SeedSequence(cfg.seed).spawn(5)
    _validated(model, data, np.random.default_rng(root[4]))
    stage = _real_stage(
        model, data, cfg, m, np.random.default_rng(root[0]), np.random.default_rng(root[1])
    )
    table = TransferTable.from_series(stage.deltas, tau_buffer=cfg.tau_buffer)
    return model, data, stage, table, r, root


def _verdict(estimate, variances, threshold: float) -> str:
    if not variances:
        return f"cppp={estimate.value:.4g} (no interval requested)"
    lo, hi = variances[0].ci
    if lo > threshold:
        return f"no evidence against model (cppp={estimate.value:.4g}, CI lower bound {lo:.4g} > {threshold})"
    if hi < threshold:
        return f"model rejected (cppp={estimate.value:.4g}, CI upper bound {hi:.4g} < {threshold})"
    return f"inconclusive (cppp={estimate.value:.4g}, CI [{lo:.4g}, {hi:.4g}] straddles {threshold})"


def cmd_cppp(cfg: RunConfig) -> int:
    cfg.validate()
    out = ensure_outdir(cfg.out)
    start = time.perf_counter()
    model, data, stage, table, r, root = _run_cppp(cfg)
    plan = _plan(cfg, r, _derived_seed(root[2]))
    estimate = calibrate(model, stage, plan)
    variances = _uncertainties(estimate, cfg, table, np.random.default_rng(root[3]))
    seconds = time.perf_counter() - start
    doc = cppp_document(estimate, variances, cfg.echo())
    write_json(
        os.path.join(out, "cppp.json"),
        doc,
        timing={"seconds": seconds, "workers": cfg.workers, "calibration_seconds": estimate.wall_time},
    )
    write_replicate_csv(os.path.join(out, "replicate.csv"), estimate)
    print(_verdict(estimate, variances, cfg.threshold))
    return 0


def cmd_repeat(cfg: RunConfig) -> int:
    cfg.validate()
    if cfg.n_repeats < 2:
        raise ConfigError(f"n_repeats must be >= 2, got {cfg.n_repeats}")
    if not cfg.uncertainty:
        raise ConfigError("repeat needs at least one uncertainty method for its intervals")
    if cfg.thinning == "systematic":
        print(
            "note: systematic thinning reuses the same replicate datasets every rerun; "
            "use thinning=random for a Monte Carlo baseline"
        )
    out = ensure_outdir(cfg.out)
    model, data, stage, table, r, root = _run_cppp(cfg)
    runs = np.random.SeedSequence(cfg.seed, spawn_key=(1,)).spawn(cfg.n_repeats)
    rows = []
    values = []
    ses = {"plugin": [], "mbb": [], "normal": []}
    intervals = []
    for i, child in enumerate(runs):
        sub = child.spawn(2)
        plan = _plan(cfg, r, _derived_seed(sub[0]))
        estimate = calibrate(model, stage, plan)
        variances = _uncertainties(estimate, cfg, table, np.random.default_rng(sub[1]))
        by_method = {v.method: v for v in variances}
        row = {
            "run": i,
            "cppp_hat": estimate.value,
            "se_plugin": by_method.get("plugin").se if "plugin" in by_method else None,
            "se_mbb": by_method.get("bootstrap_mbb").se if "bootstrap_mbb" in by_method else None,
            "se_normal": by_method.get("bootstrap_normal").se
            if "bootstrap_normal" in by_method
            else None,
            "ci_lo": variances[0].ci[0] if variances else None,
            "ci_hi": variances[0].ci[1] if variances else None,
            "covers": None,
        }
        rows.append(row)
        values.append(estimate.value)
        for method, key in (("plugin", "plugin"), ("bootstrap_mbb", "mbb"), ("bootstrap_normal", "normal")):
            if method in by_method:
                ses[key].append(by_method[method].se)
        intervals.append((row["ci_lo"], row["ci_hi"]))

    reference = cfg.reference_cppp if cfg.reference_cppp is not None else float(np.mean(values))
    for row, (lo, hi) in zip(rows, intervals):
        row["covers"] = int(lo <= reference <= hi) if lo is not None else None
    write_repeat_csv(os.path.join(out, "repeat_summary.csv"), rows)

    coverage = float(np.mean([row["covers"] for row in rows])) if rows else float("nan")
    aggregate = {
        "n_repeats": cfg.n_repeats,
        "mc_mean": float(np.mean(values)),
        "mc_sd": float(np.std(values, ddof=1)),
        "mean_se": {key: (float(np.mean(v)) if v else None) for key, v in ses.items()},
        "coverage": coverage,
        "reference_cppp": reference,
        "reference_source": "config" if cfg.reference_cppp is not None else "mc_mean",
        "config": cfg.echo(),
    }
    write_json(os.path.join(out, "repeat_aggregate.json"), aggregate)
    print(
        f"repeats={cfg.n_repeats} mc_mean={aggregate['mc_mean']:.4g} mc_sd={aggregate['mc_sd']:.4g} "
        f"coverage={coverage:.3f} (reference {reference:.4g})"
    )
    return 0


def cmd_scenario(cfg: ScenarioConfig) -> int:
    try:
        spec = ScenarioSpec(
            null_shape=BetaParams(cfg.a, cfg.b),
            cppp_true=cfg.cppp,
            budget=cfg.c,
            chain_lengths=cfg.m_grid,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = ensure_outdir(cfg.out)
    result = scenario_grid(spec)
    for row in result.rows:
        if spec.budget % row.m_tilde:
            print(f"note: budget {spec.budget} not divisible by m_tilde={row.m_tilde}; r floored to {row.r}")
    empirical = None
    if cfg.simulate:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
        empirical = [
            scenario_simulate(spec, row.m_tilde, row.r, cfg.n_outer, rng) for row in result.rows
        ]
    write_scenario_csv(os.path.join(out, "scenario.csv"), result, empirical)
    if cfg.r_grid:
        if cfg.m_fixed is None:
            raise ConfigError("r_grid sweeps need m_fixed")
        sweep = scenario_r_sweep(spec, cfg.m_fixed, cfg.r_grid)
        write_r_sweep_csv(os.path.join(out, "scenario_fixed_m.csv"), sweep)
    best = result.best_row()
    print(
        f"wrote scenario.csv ({len(result.rows)} rows); min RMSE {best.rmse:.4g} "
        f"at m_tilde={best.m_tilde}, r={best.r}"
    )
    return 0


def cmd_report(paths, bins: int, out: str) -> int:
    if not paths:
        raise ConfigError("report needs at least one results directory")
    outdir = ensure_outdir(out)
    series = []
    wrote_histogram = False
    for path in paths:
        json_path = os.path.join(path, "cppp.json")
        csv_path = os.path.join(path, "replicate.csv")
        if not (os.path.exists(json_path) and os.path.exists(csv_path)):
            raise ConfigError(f"{path}: missing cppp.json or replicate.csv")
        doc = read_json(json_path)
        rows = read_replicate_csv(csv_path)
        label = os.path.basename(os.path.normpath(path)) or "results"
        if not wrote_histogram:
            write_histogram_csv(
                os.path.join(outdir, "ppp_hist.csv"),
                [row["ppp_hat"] for row in rows],
                doc["ppp_y"],
                bins=bins,
            )
            wrote_histogram = True
        for entry in doc.get("uncertainty", []):
            series.append((label, entry["method"], doc["cppp"], entry["se"]))
        if not doc.get("uncertainty"):
            series.append((label, "none", doc["cppp"], float("nan")))
    write_errorbar_csv(os.path.join(outdir, "errorbar.csv"), series)
    print(f"wrote ppp_hist.csv and errorbar.csv ({len(series)} series)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpppkit",
        description="Calibrated posterior predictive p-values with Monte Carlo error bars.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ppp", "estimate the posterior predictive p-value of the observed data"),
        ("cppp", "estimate the calibrated p-value with uncertainty"),
        ("scenario", "analytic bias/SE/RMSE planning over budget allocations"),
        ("repeat", "rerun the calibrated check many times; Monte Carlo baseline + coverage"),
        ("report", "export plot-ready CSVs from saved results"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="parallel replicate workers")
        if name == "report":
            p.add_argument("inputs", nargs="*", help="results directories and key=value options")
        else:
            p.add_argument("overrides", nargs="*", help="key=value configuration overrides")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "scenario":
            cfg = ScenarioConfig()
            if args.config:
                read_config_file(args.config, cfg)
            parse_assignments(args.overrides, cfg)
            if args.seed is not None:
                cfg.seed = args.seed
            return cmd_scenario(cfg)
        if args.command == "report":
            paths = [token for token in args.inputs if "=" not in token]
            options = dict(token.split("=", 1) for token in args.inputs if "=" in token)
            bins = int(options.pop("bins", 20))
            out = options.pop("out", ".")
            if options:
                raise ConfigError(f"unknown report options: {sorted(options)}")
            return cmd_report(paths, bins, out)

        cfg = RunConfig()
        if args.config:
            read_config_file(args.config, cfg)
        parse_assignments(args.overrides, cfg)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        if args.command == "ppp":
            return cmd_ppp(cfg)
        if args.command == "cppp":
            return cmd_cppp(cfg)
        return cmd_repeat(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvaluationError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
