"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


def as_generator(random_state) -> tuple[np.random.Generator, int | None]:
    """Coerce ``random_state`` into a numpy Generator.

    Accepts ``None`` (fresh OS entropy), an integer seed, a ``SeedSequence``,
    or an existing ``Generator``. Returns the generator together with the
    integer seed when one was given (``None`` otherwise), so callers can
    record provenance.
    """
    if random_state is None:
        return np.random.default_rng(), None
    if isinstance(random_state, np.random.Generator):
        return random_state, None
    if isinstance(random_state, np.random.SeedSequence):
        return np.random.default_rng(random_state), None
    if isinstance(random_state, numbers.Integral):
        seed = int(random_state)
        return np.random.default_rng(seed), seed
    raise TypeError(
        f"random_state must be None, an int, a SeedSequence or a Generator, "
        f"got {type(random_state).__name__}"
    )


def check_probability(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return x


def check_open_unit(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or not 0.0 < x < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")
    return x


def check_positive(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {x}")
    return x


def check_positive_int(x, name: str) -> int:
    if not isinstance(x, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if x <= 0:
        raise ValueError(f"{name} must be >= 1, got {x}")
    return x


def check_nonnegative_int(x, name: str) -> int:
    if not isinstance(x, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if x < 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return x


def ensure_1d_floats(x, name: str, *, min_length: int = 1) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} must have at least {min_length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr
