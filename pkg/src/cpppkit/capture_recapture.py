"""Cormack-Jolly-Seber capture-recapture machinery.

Individuals enter at their first capture; afterwards they survive each
interval with probability phi and, while alive, are detected at each
occasion with probability p. Dead is absorbing and never detected. The
goodness-of-fit summary is the m-array (per release occasion, the counts
of first recaptures at each later occasion) compared against its
expectation through the Freeman-Tukey statistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import exp, log, log1p

import numpy as np

from .model import BayesianModel

__all__ = [
    "CaptureHistoryMatrix",
    "MArray",
    "CJSParams",
    "build_marray",
    "cjs_log_likelihood",
    "marray_log_likelihood",
    "expected_marray",
    "recapture_probabilities",
    "freeman_tukey",
    "cjs_simulate",
    "load_capture_histories",
    "CjsModel",
]


@dataclass(frozen=True)
class CaptureHistoryMatrix:
    """Binary sighting histories with the first-capture occasion per row."""

    histories: np.ndarray
    first_capture: np.ndarray

    def __post_init__(self):
        hist = np.asarray(self.histories, dtype=np.int8)
        first = np.asarray(self.first_capture, dtype=np.int64)
        object.__setattr__(self, "histories", hist)
        object.__setattr__(self, "first_capture", first)
        if hist.ndim != 2 or hist.shape[0] < 1 or hist.shape[1] < 2:
            raise ValueError(f"histories must be a non-empty n x k matrix, got {hist.shape}")
        if not np.all((hist == 0) | (hist == 1)):
            raise ValueError("histories must be binary")
        if first.shape != (hist.shape[0],):
            raise ValueError("first_capture must have one entry per individual")
        rows = np.arange(hist.shape[0])
        if not np.all(hist[rows, first] == 1):
            raise ValueError("each individual must be captured at its first-capture occasion")
        before = np.cumsum(hist, axis=1)[rows, first] - 1
        if np.any(before != 0):
            raise ValueError("no captures are allowed before the first-capture occasion")

    @classmethod
    def from_histories(cls, histories) -> "CaptureHistoryMatrix":
        hist = np.asarray(histories, dtype=np.int8)
        if hist.ndim != 2:
            raise ValueError(f"histories must be an n x k matrix, got shape {hist.shape}")
        if np.any(hist.sum(axis=1) == 0):
            bad = int(np.flatnonzero(hist.sum(axis=1) == 0)[0])
            raise ValueError(f"history {bad} has no captures at all")
        return cls(histories=hist, first_capture=hist.argmax(axis=1))

    @property
    def n_individuals(self) -> int:
        return int(self.histories.shape[0])

    @property
    def n_occasions(self) -> int:
        return int(self.histories.shape[1])

    @cached_property
    def marray(self) -> "MArray":
        return build_marray(self)

    def release_schedule(self) -> np.ndarray:
        """New first captures per occasion (length k)."""
        return np.bincount(self.first_capture, minlength=self.n_occasions)

    def digest_bytes(self) -> bytes:
        shape = np.array(self.histories.shape, dtype=np.int64)
        return shape.tobytes() + np.ascontiguousarray(self.histories).tobytes()


@dataclass(frozen=True)
class MArray:
    """Release/first-recapture summary of a capture-history matrix.

    ``counts[s, t]`` is the number of animals released at occasion s
    whose next capture is at occasion t (0-based, t > s); every capture
    before the final occasion counts as a release.
    """

    releases: np.ndarray
    counts: np.ndarray
    never_seen: np.ndarray

    def __post_init__(self):
        releases = np.asarray(self.releases, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        never = np.asarray(self.never_seen, dtype=np.int64)
        object.__setattr__(self, "releases", releases)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "never_seen", never)
        k = counts.shape[1]
        if counts.shape != (k - 1, k):
            raise ValueError(f"counts must have shape (k-1, k), got {counts.shape}")
        if releases.shape != (k - 1,) or never.shape != (k - 1,):
            raise ValueError("releases and never_seen must have one entry per release occasion")
        if np.any(np.tril(counts[:, : k - 1], k=0) != 0):
            raise ValueError("counts below or on the diagonal must be zero")
        if np.any(counts.sum(axis=1) + never != releases):
            raise ValueError("per-release counts plus never-seen must equal releases")

    @property
    def n_occasions(self) -> int:
        return int(self.counts.shape[1])

    @cached_property
    def _cells(self):
        """Sparse native-Python view used by the likelihood hot path."""
        s_idx, t_idx = np.nonzero(self.counts)
        cells = [
            (int(s), int(t), float(self.counts[s, t])) for s, t in zip(s_idx, t_idx)
        ]
        never = [
            (int(s), float(w)) for s, w in enumerate(self.never_seen) if w > 0
        ]
        return cells, never

    @cached_property
    def sqrt_counts(self) -> np.ndarray:
        return np.sqrt(self.counts.astype(float))


def build_marray(data: CaptureHistoryMatrix) -> MArray:
    """Tabulate releases and first recaptures from a history matrix."""
    hist = data.histories
    n, k = hist.shape
    # next_capture[i, s]: first occasion after s at which i is captured (k if none)
    next_capture = np.full((n, k), k, dtype=np.int64)
    for s in range(k - 2, -1, -1):
        next_capture[:, s] = np.where(hist[:, s + 1] == 1, s + 1, next_capture[:, s + 1])
    rows, cols = np.nonzero(hist[:, : k - 1])
    releases = np.bincount(cols, minlength=k - 1)
    nxt = next_capture[rows, cols]
    recaptured = nxt < k
    flat = cols[recaptured] * k + nxt[recaptured]
    counts = np.bincount(flat, minlength=(k - 1) * k).reshape(k - 1, k)
    never = releases - counts.sum(axis=1)
    return MArray(releases=releases, counts=counts, never_seen=never)


@dataclass(frozen=True)
class CJSParams:
    """Survival probabilities phi[t] (occasion t to t+1) and detection
    probabilities p[t] (at occasion t+1), each of length k-1."""

    phi: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).ravel()
        p = np.asarray(self.p, dtype=float).ravel()
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "p", p)
        if phi.size != p.size or phi.size < 1:
            raise ValueError("phi and p must have equal positive length k-1")
        for name, arr in (("phi", phi), ("p", p)):
            if np.any((arr <= 0.0) | (arr >= 1.0)):
                raise ValueError(f"{name} entries must lie strictly inside (0, 1)")

    @classmethod
    def tied(cls, phi: float, p: float, k: int) -> "CJSParams":
        return cls(phi=np.full(k - 1, float(phi)), p=np.full(k - 1, float(p)))

    @property
    def n_occasions(self) -> int:
        return int(self.phi.size + 1)


def _never_seen_tail(phi: np.ndarray, p: np.ndarray, k: int) -> np.ndarray:
    chi = np.ones(k)
    for s in range(k - 2, -1, -1):
        chi[s] = (1.0 - phi[s]) + phi[s] * (1.0 - p[s]) * chi[s + 1]
    return chi[: k - 1]


def _recapture_matrix_raw(phi: np.ndarray, p: np.ndarray, k: int) -> np.ndarray:
    """q[s, t] via prefix products of the survive-and-miss factors.

    q[s, t] = prod_{u=s}^{t-2} phi_u (1 - p_{u+1}) * phi_{t-1} p_t, so
    with g_u = phi_u (1 - p_{u+1}) and G the prefix products of g,
    q[s, t] = (G[t-1] / G[s]) * phi_{t-1} p_t. Exact zeros in g (possible
    only at the float boundary of the probabilities) fall back to a
    direct loop to avoid 0/0.
    """
    g = phi * (1.0 - p)
    if np.any(g == 0.0):
        q = np.zeros((k - 1, k))
        for s in range(k - 1):
            carry = 1.0
            for t in range(s + 1, k):
                q[s, t] = carry * phi[t - 1] * p[t - 1]
                carry *= g[t - 1]
        return q
    prefix = np.empty(k)
    prefix[0] = 1.0
    np.cumprod(g, out=prefix[1:])
    weight = prefix[:-1] * phi * p  # indexed by t-1
    q = np.zeros((k - 1, k))
    q[:, 1:] = weight[None, :] / prefix[: k - 1, None]
    q *= _upper_mask(k)
    return q


def _upper_mask(k: int) -> np.ndarray:
    mask = _MASK_CACHE.get(k)
    if mask is None:
        mask = np.triu(np.ones((k - 1, k)), k=1)
        _MASK_CACHE[k] = mask
    return mask


_MASK_CACHE: dict[int, np.ndarray] = {}


def recapture_probabilities(params: CJSParams, k: int):
    """Per release occasion: next-capture probabilities and the never-seen tail.

    Returns ``(q, chi)`` where ``q[s, t]`` is the probability that an
    animal released at s is next captured at t and ``chi[s]`` is the
    probability it is never seen again. For each s these sum to one.
    """
    if params.n_occasions != k:
        raise ValueError(f"parameters are for {params.n_occasions} occasions, data has {k}")
    return _recapture_matrix_raw(params.phi, params.p, k), _never_seen_tail(params.phi, params.p, k)


def _marray_log_likelihood_py(phi, p, k: int, cells, never) -> float:
    """Native-float likelihood kernel; phi and p are Python sequences.

    Pure-Python arithmetic over the handful of occupied m-array cells is
    markedly faster here than vectorized calls on arrays this small.
    """
    g = [phi_u * (1.0 - p_u) for phi_u, p_u in zip(phi, p)]
    prefix = [1.0] * k
    acc = 1.0
    for u in range(k - 1):
        acc *= g[u]
        prefix[u + 1] = acc
    total = 0.0
    for s, t, z in cells:
        denom = prefix[s]
        q = prefix[t - 1] * phi[t - 1] * p[t - 1] / denom if denom > 0.0 else _q_cell(phi, p, s, t)
        if q <= 0.0:
            return -np.inf
        total += z * log(q)
    if never:
        chi_next = 1.0
        chi = [0.0] * (k - 1)
        for s in range(k - 2, -1, -1):
            chi_next = (1.0 - phi[s]) + g[s] * chi_next
            chi[s] = chi_next
        for s, w in never:
            if chi[s] <= 0.0:
                return -np.inf
            total += w * log(chi[s])
    return total


def _q_cell(phi, p, s: int, t: int) -> float:
    carry = 1.0
    for u in range(s, t - 1):
        carry *= phi[u] * (1.0 - p[u])
    return carry * phi[t - 1] * p[t - 1]


def _marray_log_likelihood_raw(phi, p, marr: MArray) -> float:
    cells, never = marr._cells
    return _marray_log_likelihood_py(
        [float(v) for v in phi], [float(v) for v in p], marr.n_occasions, cells, never
    )


def marray_log_likelihood(params: CJSParams, marr: MArray) -> float:
    """Log likelihood of an m-array under the survival/detection model.

    Because each individual's history factors into independent
    release-to-next-capture segments, this equals the sum over
    individuals of the forward-algorithm likelihood.
    """
    if params.n_occasions != marr.n_occasions:
        raise ValueError(
            f"parameters are for {params.n_occasions} occasions, data has {marr.n_occasions}"
        )
    return _marray_log_likelihood_raw(params.phi, params.p, marr)


def cjs_log_likelihood(params: CJSParams, data: CaptureHistoryMatrix) -> float:
    """Sum over individuals of the two-state forward-algorithm likelihood.

    States are alive/dead with dead absorbing; conditioning is on the
    first capture. Identical histories are grouped so the cost scales
    with the number of distinct histories.
    """
    hist = data.histories
    k = data.n_occasions
    if params.n_occasions != k:
        raise ValueError(f"parameters are for {params.n_occasions} occasions, data has {k}")
    unique, counts = np.unique(hist, axis=0, return_counts=True)
    phi = params.phi
    p = params.p
    total = 0.0
    for row, mult in zip(unique, counts):
        f = int(row.argmax())
        alive = 1.0
        dead = 0.0
        for t in range(f + 1, k):
            survived = alive * phi[t - 1]
            died = dead + alive * (1.0 - phi[t - 1])
            if row[t]:
                alive = survived * p[t - 1]
                dead = 0.0
            else:
                alive = survived * (1.0 - p[t - 1])
                dead = died
        prob = alive + dead
        if prob <= 0.0:
            return -np.inf
        total += mult * log(prob)
    return total


def expected_marray(params: CJSParams, releases) -> np.ndarray:
    """Expected m-array counts given per-occasion release totals."""
    releases = np.asarray(releases, dtype=float).ravel()
    k = releases.size + 1
    q, _ = recapture_probabilities(params, k)
    return releases[:, None] * q


def freeman_tukey(observed, expected) -> float:
    """Sum of squared differences of square roots, cell by cell."""
    z = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if z.shape != e.shape:
        raise ValueError(f"shape mismatch: observed {z.shape} vs expected {e.shape}")
    return float(np.sum((np.sqrt(z) - np.sqrt(e)) ** 2))


def cjs_simulate(params: CJSParams, release_schedule, k: int, rng) -> CaptureHistoryMatrix:
    """Forward-simulate sighting histories.

    ``release_schedule`` gives the number of newly marked animals per
    occasion (length k-1 or k; a cohort at the final occasion is legal
    but carries no recapture information).
    """
    schedule = np.asarray(release_schedule, dtype=np.int64).ravel()
    if schedule.size not in (k - 1, k):
        raise ValueError(f"release schedule must have length {k - 1} or {k}, got {schedule.size}")
    if np.any(schedule < 0):
        raise ValueError("release schedule entries must be >= 0")
    if params.n_occasions != k:
        raise ValueError(f"parameters are for {params.n_occasions} occasions, data has {k}")
    total = int(schedule.sum())
    if total == 0:
        raise ValueError("release schedule must place at least one individual")
    first = np.repeat(np.arange(schedule.size), schedule)
    phi = params.phi
    p = params.p
    survival_u = rng.random((total, k))
    detection_u = rng.random((total, k))
    hist = np.zeros((total, k), dtype=np.int8)
    alive = first == 0
    hist[alive, 0] = 1
    for t in range(1, k):
        alive &= survival_u[:, t] < phi[t - 1]
        hist[:, t] = alive & (detection_u[:, t] < p[t - 1])
        entrants = first == t
        alive |= entrants
        hist[entrants, t] = 1
    return _trusted_matrix(hist, first)


def _trusted_matrix(hist: np.ndarray, first: np.ndarray) -> CaptureHistoryMatrix:
    # bypasses validation for simulator output, which is valid by construction
    matrix = object.__new__(CaptureHistoryMatrix)
    object.__setattr__(matrix, "histories", hist)
    object.__setattr__(matrix, "first_capture", first)
    return matrix


def load_capture_histories(path) -> CaptureHistoryMatrix:
    """Parse the documented history file format.

    One history per line: k characters from {0,1}, optionally followed by
    a whitespace-separated positive multiplicity; ``#`` lines are
    comments. Zero-capture histories are rejected with the line number.
    """
    rows = []
    width = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) > 2:
                raise ValueError(f"{path}: line {lineno}: expected 'HISTORY [COUNT]', got {text!r}")
            pattern = parts[0]
            if width is None:
                width = len(pattern)
            if len(pattern) != width:
                raise ValueError(
                    f"{path}: line {lineno}: history length {len(pattern)} != {width}"
                )
            if set(pattern) - {"0", "1"}:
                raise ValueError(f"{path}: line {lineno}: non-binary symbol in {pattern!r}")
            if "1" not in pattern:
                raise ValueError(f"{path}: line {lineno}: history has no captures")
            mult = 1
            if len(parts) == 2:
                try:
                    mult = int(parts[1])
                except ValueError as exc:
                    raise ValueError(
                        f"{path}: line {lineno}: multiplicity must be an integer, got {parts[1]!r}"
                    ) from exc
                if mult < 1:
                    raise ValueError(f"{path}: line {lineno}: multiplicity must be >= 1")
            rows.extend([[int(ch) for ch in pattern]] * mult)
    if not rows:
        raise ValueError(f"{path}: no histories found")
    return CaptureHistoryMatrix.from_histories(np.asarray(rows, dtype=np.int8))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _sigmoid_scalar(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


class CjsModel(BayesianModel):
    """Survival/detection model bound to a study design.

    Parameters are sampled on the logit scale with the Jacobian of the
    uniform priors folded into the log posterior. ``time_varying=False``
    ties survival and detection to one value each.
    """

    def __init__(self, k: int, release_schedule, time_varying: bool):
        self.k = int(k)
        if self.k < 2:
            raise ValueError(f"need at least two occasions, got {k}")
        schedule = np.asarray(release_schedule, dtype=np.int64).ravel()
        if schedule.size not in (self.k - 1, self.k):
            raise ValueError(
                f"release schedule must have length {self.k - 1} or {self.k}, got {schedule.size}"
            )
        self.release_schedule = schedule[: self.k - 1].copy()
        if self.release_schedule.sum() <= 0:
            raise ValueError("release schedule must place at least one individual before the end")
        self.time_varying = bool(time_varying)
        if self.time_varying:
            self.param_names = tuple(
                [f"logit_phi_{t + 1}" for t in range(self.k - 1)]
                + [f"logit_p_{t + 2}" for t in range(self.k - 1)]
            )
        else:
            self.param_names = ("logit_phi", "logit_p")

    @classmethod
    def for_data(cls, data: CaptureHistoryMatrix, time_varying: bool) -> "CjsModel":
        return cls(
            k=data.n_occasions,
            release_schedule=data.release_schedule(),
            time_varying=time_varying,
        )

    def params_from(self, theta) -> CJSParams:
        phi, p = self._probs(theta)
        return CJSParams(phi=phi, p=p)

    def _probs(self, theta):
        # unvalidated fast path: sigmoid output is interior by construction
        theta = np.asarray(theta, dtype=float)
        if self.time_varying:
            half = self.k - 1
            return _sigmoid(theta[:half]), _sigmoid(theta[half:])
        probs = _sigmoid(theta[:2])
        return np.full(self.k - 1, probs[0]), np.full(self.k - 1, probs[1])

    def log_posterior(self, theta, data) -> float:
        values = theta.tolist() if hasattr(theta, "tolist") else [float(v) for v in theta]
        if self.time_varying:
            half = self.k - 1
            phi = [_sigmoid_scalar(x) for x in values[:half]]
            p = [_sigmoid_scalar(x) for x in values[half:]]
        else:
            phi = [_sigmoid_scalar(values[0])] * (self.k - 1)
            p = [_sigmoid_scalar(values[1])] * (self.k - 1)
        cells, never = self._marray(data)._cells
        loglik = _marray_log_likelihood_py(phi, p, self.k, cells, never)
        if loglik == -np.inf:
            return loglik
        # Jacobian of the logit transform under the uniform priors:
        # log sigma(x) + log(1 - sigma(x)) = -(|x| + 2 log1p(exp(-|x|)))
        jacobian = 0.0
        for x in values:
            ax = abs(x)
            jacobian -= ax + 2.0 * log1p(exp(-ax))
        return loglik + jacobian

    def simulate_predictive(self, theta, rng) -> CaptureHistoryMatrix:
        return cjs_simulate(self.params_from(theta), self.release_schedule, self.k, rng)

    def discrepancy(self, data, theta) -> float:
        marr = self._marray(data)
        phi, p = self._probs(theta)
        expected = marr.releases[:, None] * _recapture_matrix_raw(phi, p, self.k)
        diff = marr.sqrt_counts - np.sqrt(expected)
        return float(np.einsum("ij,ij->", diff, diff))

    def initial_point(self, data) -> np.ndarray:
        return np.zeros(len(self.param_names))

    @staticmethod
    def _marray(data) -> MArray:
        if isinstance(data, MArray):
            return data
        return data.marray
