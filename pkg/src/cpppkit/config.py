"""Plain-text run configuration: key=value files with command-line overrides.

The format is deliberately trivial so configs diff cleanly and can be
embedded verbatim in result documents for provenance: one ``key = value``
per line, ``#`` comments, later assignments win. Command-line overrides
are the same ``key=value`` tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "ScenarioConfig", "parse_assignments", "read_config_file"]


class ConfigError(ValueError):
    """Bad configuration or unusable input files (usage-level failure)."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_opt_int(text: str):
    return None if text.strip().lower() == "none" else int(text)


def _parse_opt_float(text: str):
    return None if text.strip().lower() == "none" else float(text)


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


@dataclass
class RunConfig:
    """Settings shared by the ppp/cppp/repeat commands."""

    model: str = "newcomb"
    data: str | None = None
    m: int | None = None
    burn_in: int = 1000
    mixing: str = "good"
    # detune multiplier for mixing=bad, calibrated so parameter-chain ESS
    # drops roughly 4-6x below the adapted kernel on the normal example
    bad_scale_factor: float = 10.0
    r: int = 100
    c: int | None = None
    policy: str = "ess_target"
    m_tilde: int | None = None
    ess_target: float = 100.0
    max_iterations: int | None = None
    thinning: str = "systematic"
    workers: int = 1
    seed: int = 0
    uncertainty: tuple[str, ...] = ("plugin",)
    b: int = 100
    block_length: int | None = None
    tau_buffer: float = 1.0
    threshold: float = 0.05
    ci_level: float = 0.95
    out: str = "."
    chain_dump: bool = False
    n_repeats: int = 2
    reference_cppp: float | None = None

    def validate(self) -> None:
        if self.model not in ("newcomb", "dipper_cc", "dipper_tt", "simulated_tt"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.mixing not in ("good", "bad"):
            raise ConfigError(f"mixing must be 'good' or 'bad', got {self.mixing!r}")
        if self.policy not in ("fixed", "ess_target"):
            raise ConfigError(f"policy must be 'fixed' or 'ess_target', got {self.policy!r}")
        if self.policy == "fixed" and self.m_tilde is None:
            raise ConfigError("policy=fixed requires m_tilde")
        if self.thinning not in ("systematic", "random"):
            raise ConfigError(f"thinning must be 'systematic' or 'random', got {self.thinning!r}")
        unknown = set(self.uncertainty) - {"plugin", "mbb", "normal"}
        if unknown:
            raise ConfigError(f"unknown uncertainty methods: {sorted(unknown)}")
        for name in ("r", "burn_in", "workers", "b", "n_repeats"):
            if getattr(self, name) < 0 or (name in ("r", "workers", "b") and getattr(self, name) < 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError(f"ci_level must be in (0, 1), got {self.ci_level}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.tau_buffer < 1.0:
            raise ConfigError(f"tau_buffer must be >= 1, got {self.tau_buffer}")

    def echo(self) -> dict:
        """Configuration as written into result documents.

        Execution details that cannot change results (worker count,
        output directory) are excluded so reruns compare byte-identical.
        """
        doc = {}
        for f in fields(self):
            if f.name in ("workers", "out", "chain_dump"):
                continue
            value = getattr(self, f.name)
            doc[f.name] = list(value) if isinstance(value, tuple) else value
        return doc


@dataclass
class ScenarioConfig:
    """Settings for the analytic budget-planning command."""

    a: float = 2.0
    b: float = 2.0
    cppp: float = 0.2
    c: int = 20_000
    m_grid: tuple[int, ...] = (10, 20, 50, 100, 200, 500, 1000)
    m_fixed: int | None = None
    r_grid: tuple[int, ...] = ()
    simulate: bool = False
    n_outer: int = 2000
    seed: int = 0
    out: str = "."


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    "opt_int": _parse_opt_int,
    "opt_float": _parse_opt_float,
    "opt_str": lambda text: None if text.strip().lower() == "none" else text.strip(),
    "str_list": _parse_str_list,
    "int_list": _parse_int_list,
}

_FIELD_KINDS = {
    RunConfig: {
        "model": str, "data": "opt_str", "m": "opt_int", "burn_in": int,
        "mixing": str, "bad_scale_factor": float, "r": int, "c": "opt_int",
        "policy": str, "m_tilde": "opt_int", "ess_target": float,
        "max_iterations": "opt_int", "thinning": str, "workers": int,
        "seed": int, "uncertainty": "str_list", "b": int,
        "block_length": "opt_int", "tau_buffer": float, "threshold": float,
        "ci_level": float, "out": str, "chain_dump": bool, "n_repeats": int,
        "reference_cppp": "opt_float",
    },
    ScenarioConfig: {
        "a": float, "b": float, "cppp": float, "c": int, "m_grid": "int_list",
        "m_fixed": "opt_int", "r_grid": "int_list", "simulate": bool,
        "n_outer": int, "seed": int, "out": str,
    },
}


def parse_assignments(pairs, config):
    """Apply ``key=value`` strings onto a config dataclass in place."""
    kinds = _FIELD_KINDS[type(config)]
    for raw in pairs:
        if "=" not in raw:
            raise ConfigError(f"expected key=value, got {raw!r}")
        key, _, value = raw.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            setattr(config, key, _PARSERS[kinds[key]](value.strip()))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {value.strip()!r} ({exc})") from exc
    return config


def read_config_file(path, config):
    """Load assignments from a key=value file onto a config dataclass."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    assignments = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}: line {lineno}: expected key=value, got {text!r}")
        assignments.append(text)
    return parse_assignments(assignments, config)
