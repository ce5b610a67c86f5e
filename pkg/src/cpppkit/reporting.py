"""Result persistence and plot-data export.

All documents separate a ``timing`` block from the result payload, so a
determinism check can compare everything except timing byte for byte.
CSV floats are written with ``repr`` (shortest round-trip form), which is
stable across runs of the same build.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

__all__ = [
    "write_json",
    "read_json",
    "ppp_document",
    "cppp_document",
    "write_replicate_csv",
    "read_replicate_csv",
    "write_chain_csv",
    "write_scenario_csv",
    "write_r_sweep_csv",
    "write_repeat_csv",
    "write_histogram_csv",
    "write_errorbar_csv",
]

REPLICATE_HEADER = ["j", "m_tilde", "k_tilde", "ppp_hat", "tau_hat", "ess_hat"]
REPEAT_HEADER = ["run", "cppp_hat", "se_plugin", "se_mbb", "se_normal", "ci_lo", "ci_hi", "covers"]
SCENARIO_HEADER = ["m_tilde", "r", "ppp_y", "abs_bias", "se", "rmse"]


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_json(path, document: dict, timing: dict | None = None) -> None:
    doc = dict(document)
    if timing is not None:
        doc["timing"] = timing
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def ppp_document(estimate, config_echo: dict) -> dict:
    return {
        "ppp_hat": estimate.value,
        "k": estimate.k,
        "m": estimate.m,
        "ess": estimate.ess,
        "tau": estimate.tau,
        "config": config_echo,
    }


def _policy_echo(plan) -> dict:
    from .calibration import EssTarget, FixedLength

    policy = plan.chain_length
    if isinstance(policy, FixedLength):
        return {"kind": "fixed", "m_tilde": policy.n_iterations}
    if isinstance(policy, EssTarget):
        return {
            "kind": "ess_target",
            "target": policy.target,
            "max_iterations": policy.max_iterations,
            "increment": policy.increment,
        }
    return {"kind": "unknown"}


def cppp_document(estimate, variances=(), config_echo: dict | None = None) -> dict:
    replicates = [
        {
            "j": res.index,
            "m_tilde": res.n_iterations,
            "k_tilde": res.count,
            "ppp_hat": res.ppp_hat,
            "tau_hat": res.tau_hat,
            "seed": res.seed_key,
            "ess_short": res.ess_short,
            "data_digest": res.data_digest,
        }
        for res in estimate.replicates
    ]
    doc = {
        "ppp_y": estimate.ppp_y,
        "cppp": estimate.value,
        "r": estimate.n_replicates,
        "policy": _policy_echo(estimate.plan) if estimate.plan else None,
        "replicates": replicates,
        "uncertainty": [
            {
                "method": v.method,
                "variance": v.variance,
                "se": v.se,
                "ci": list(v.ci) if v.ci else None,
                "params": {"b": v.b, "block_length": v.block_length, "ci_level": v.ci_level},
            }
            for v in variances
        ],
    }
    if estimate.real_ppp is not None:
        doc["real_chain"] = {
            "ppp_hat": estimate.real_ppp.value,
            "k": estimate.real_ppp.k,
            "m": estimate.real_ppp.m,
            "ess": estimate.real_ppp.ess,
            "tau": estimate.real_ppp.tau,
        }
    if config_echo is not None:
        doc["config"] = config_echo
    return doc


def write_replicate_csv(path, estimate) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPLICATE_HEADER)
        for res in estimate.replicates:
            ess = res.ess_hat
            if ess is None and res.tau_hat:
                ess = res.n_iterations / res.tau_hat
            writer.writerow(
                [
                    res.index,
                    res.n_iterations,
                    res.count,
                    _fmt(res.ppp_hat),
                    _fmt(res.tau_hat),
                    _fmt(ess),
                ]
            )


def read_replicate_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        rows = []
        for row in reader:
            rows.append(
                {
                    "j": int(row["j"]),
                    "m_tilde": int(row["m_tilde"]),
                    "k_tilde": int(row["k_tilde"]),
                    "ppp_hat": float(row["ppp_hat"]),
                    "tau_hat": float(row["tau_hat"]),
                    "ess_hat": float(row["ess_hat"]),
                }
            )
    return rows


def write_chain_csv(path, chain) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iter", *chain.names, "accepted"])
        counts = chain.accept_counts
        for i in range(len(chain)):
            accepted = int(counts[i]) if counts is not None else ""
            writer.writerow([i, *(_fmt(float(v)) for v in chain.draws[i]), accepted])


def write_scenario_csv(path, result, empirical=None) -> None:
    header = list(SCENARIO_HEADER)
    if empirical is not None:
        header += ["emp_abs_bias", "emp_se"]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i, row in enumerate(result.rows):
            record = [
                row.m_tilde,
                row.r,
                _fmt(row.ppp_y),
                _fmt(row.abs_bias),
                _fmt(row.se),
                _fmt(row.rmse),
            ]
            if empirical is not None:
                sim = empirical[i]
                record += [_fmt(abs(sim.bias)), _fmt(float(np.sqrt(sim.variance)))]
            writer.writerow(record)


def write_r_sweep_csv(path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["m_tilde", "r", "abs_bias", "se", "rmse"])
        for row in result.rows:
            writer.writerow(
                [row.m_tilde, row.r, _fmt(row.abs_bias), _fmt(row.se), _fmt(row.rmse)]
            )


def write_repeat_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPEAT_HEADER)
        for row in rows:
            writer.writerow(
                [row[name] if isinstance(row[name], int) else _fmt(row[name]) for name in REPEAT_HEADER]
            )


def write_histogram_csv(path, ppp_values, ppp_y: float, bins: int = 20) -> None:
    counts, edges = np.histogram(np.asarray(ppp_values, dtype=float), bins=bins, range=(0.0, 1.0))
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_lo", "bin_hi", "count", "ppp_y_marker"])
        for lo, hi, count in zip(edges[:-1], edges[1:], counts):
            writer.writerow([_fmt(float(lo)), _fmt(float(hi)), int(count), _fmt(ppp_y)])


def write_errorbar_csv(path, series) -> None:
    """One row per (allocation label, method): value plus one-sigma bar."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "method", "cppp_hat", "se"])
        for label, method, value, se in series:
            writer.writerow([label, method, _fmt(value), _fmt(se)])


def ensure_outdir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
