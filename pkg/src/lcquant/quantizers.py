"""Optimal scalar quantization of weight vectors.

Every operation here solves the same problem: given a real-valued vector
``w`` of length P, find the codebook entry (possibly rescaled) closest to
each element, minimizing the total squared distortion.  Codebooks come in
three flavours:

* adaptive  -- entries learned from the data (1-D k-means / k-medians),
* fixed     -- entries given up front ({-1,+1}, {-1,0,+1}, powers of two),
* fixed with a learned global scale ``a`` ({-a,+a}, {-a,0,+a}, ...).

All functions are pure: they never mutate their inputs, and any randomness
(k-means++ seeding) flows through an explicit ``rng`` argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Codebook",
    "Assignments",
    "QuantParams",
    "KmeansResult",
    "FixedScaleResult",
    "decompress",
    "assign_fixed",
    "kmeans_1d",
    "kmedians_1d",
    "binarize",
    "binarize_scale",
    "ternarize",
    "ternarize_scale",
    "pow2_quantize",
    "pow2_codebook",
    "fixed_scale_alternate",
]

ADAPTIVE = "adaptive"
FIXED = "fixed"
FIXED_WITH_SCALE = "fixed_with_scale"

# Safety cap on Lloyd-style alternations; normal runs converge much earlier.
MAX_LLOYD_ITERS = 100


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Codebook:
    """An ordered set of quantization levels, optionally with a global scale.

    ``entries`` are strictly increasing finite scalars c_1 < ... < c_K.
    ``scale`` is present only for kind "fixed_with_scale"; the represented
    values are then ``scale * entries``.  A scale of zero is only legal on
    degenerate results (all-zero input), which the owning QuantParams flags.
    """

    entries: np.ndarray
    kind: str = FIXED
    scale: float | None = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 1 or entries.size < 1:
            raise ValueError("codebook must be a nonempty 1-D array")
        if not np.all(np.isfinite(entries)):
            raise ValueError("codebook entries must be finite")
        if entries.size > 1 and not np.all(np.diff(entries) > 0):
            raise ValueError("codebook entries must be strictly increasing")
        if self.kind not in (ADAPTIVE, FIXED, FIXED_WITH_SCALE):
            raise ValueError(f"unknown codebook kind: {self.kind!r}")
        if (self.scale is not None) != (self.kind == FIXED_WITH_SCALE):
            raise ValueError("scale is present iff kind is fixed_with_scale")
        if self.scale is not None and not np.isfinite(self.scale):
            raise ValueError("scale must be finite")

    @property
    def k(self) -> int:
        return self.entries.size

    def values(self) -> np.ndarray:
        """The represented levels: entries times the scale (if any)."""
        if self.scale is None:
            return self.entries
        return self.scale * self.entries


@dataclass(frozen=True)
class Assignments:
    """Per-weight codebook indices, 0-based, each in [0, K)."""

    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.array(self.kappa, dtype=np.int64)
        kappa.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        if kappa.ndim != 1:
            raise ValueError("assignments must be 1-D")
        if kappa.size and kappa.min() < 0:
            raise ValueError("assignment index out of range")

    def __len__(self) -> int:
        return self.kappa.size


@dataclass(frozen=True)
class QuantParams:
    """A quantized representation of one weight vector: codebook + indices.

    ``degenerate`` marks results where a *_scale operator received an
    all-zero input and returned scale 0; these occur transiently inside
    compression runs and are valid (they decompress to zeros).
    """

    codebook: Codebook
    assignments: Assignments
    degenerate: bool = field(default=False)

    def __post_init__(self):
        kappa = self.assignments.kappa
        if kappa.size and kappa.max() >= self.codebook.k:
            raise ValueError("assignment index out of range for codebook")
        if (
            self.codebook.scale is not None
            and not self.degenerate
            and not self.codebook.scale > 0
        ):
            raise ValueError("scale must be positive on non-degenerate results")

    @property
    def n_weights(self) -> int:
        return len(self.assignments)


class KmeansResult(NamedTuple):
    params: QuantParams
    distortion: float
    n_iter: int
    # distortion after each Lloyd iteration (nonincreasing)
    history: np.ndarray


class FixedScaleResult(NamedTuple):
    params: QuantParams
    objective: float
    n_iter: int


# ---------------------------------------------------------------------------
# Decompression and nearest-entry assignment
# ---------------------------------------------------------------------------

def decompress(q: QuantParams) -> np.ndarray:
    """Look each weight up in its codebook: out[i] = scale * c_kappa(i)."""
    return q.codebook.values()[q.assignments.kappa]


def _assign_midpoints(w: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Nearest index into sorted ``levels``; midpoint ties go to the higher index.

    The Voronoi cell of level k is [m_{k-1}, m_k) with m_k the midpoint of
    levels k and k+1, so a binary search over the K-1 midpoints resolves
    every weight in O(log K).
    """
    if levels.size == 1:
        return np.zeros(w.size, dtype=np.int64)
    mids = 0.5 * (levels[:-1] + levels[1:])
    return np.searchsorted(mids, w, side="right").astype(np.int64)


def assign_fixed(w, codebook) -> Assignments:
    """Optimal assignment of each weight to a fixed codebook.

    ``codebook`` may be a Codebook or a sorted 1-D array of entries.
    """
    w = np.asarray(w, dtype=float)
    if isinstance(codebook, Codebook):
        levels = codebook.values()
        if codebook.scale is not None and codebook.scale < 0:
            # A negative scale reverses the level order.
            order = np.argsort(levels, kind="stable")
            idx = _assign_midpoints(w, levels[order])
            return Assignments(order[idx])
        entries = levels
    else:
        entries = np.asarray(codebook, dtype=float)
        if entries.size > 1 and not np.all(np.diff(entries) > 0):
            raise ValueError("codebook entries must be strictly increasing")
    return Assignments(_assign_midpoints(w, entries))


# ---------------------------------------------------------------------------
# Adaptive codebooks: 1-D k-means / k-medians
# ---------------------------------------------------------------------------

def _kmeanspp_init(w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each new centroid is drawn by D^2-weighted sampling; among
    2 + floor(log k) sampled candidates the one that most reduces the
    total distortion-to-nearest is kept.
    """
    n_candidates = 2 + int(np.log(k)) if k > 1 else 1
    centroids = np.empty(k)
    centroids[0] = w[rng.integers(w.size)]
    d2 = (w - centroids[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(w.size, size=n_candidates, p=d2 / total)
        else:
            # All remaining mass is at distance 0 (fewer distinct values
            # than k); any choice is equivalent.
            idx = rng.integers(w.size, size=n_candidates)
        cand_d2 = np.minimum(d2, (w[None, :] - w[idx, None]) ** 2)
        best = int(np.argmin(cand_d2.sum(axis=1)))
        centroids[j] = w[idx[best]]
        d2 = cand_d2[best]
    return np.sort(centroids)


def _cluster_boundaries(w_sorted: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Indices b[0..K] such that cluster j owns w_sorted[b[j]:b[j+1]].

    Weights equal to a midpoint land in the upper cluster, consistent with
    _assign_midpoints.
    """
    k = centroids.size
    b = np.empty(k + 1, dtype=np.int64)
    b[0] = 0
    b[k] = w_sorted.size
    if k > 1:
        mids = 0.5 * (centroids[:-1] + centroids[1:])
        b[1:k] = np.searchsorted(w_sorted, mids, side="left")
    return b


def _sse(prefix1, prefix2, b, centroids) -> float:
    """Total squared distortion of the clustering, via prefix sums.

    Accumulated sequentially over clusters so the result is reproducible.
    """
    total = 0.0
    for j in range(centroids.size):
        lo, hi = b[j], b[j + 1]
        n = hi - lo
        if n == 0:
            continue
        s1 = prefix1[hi] - prefix1[lo]
        s2 = prefix2[hi] - prefix2[lo]
        c = centroids[j]
        total += s2 - 2.0 * c * s1 + n * c * c
    return total


def _repair_empty_clusters(w_sorted, centroids, b):
    """Reseed empty clusters at the weight farthest from its centroid.

    Standard Lloyd repair: moving a centroid onto the worst-served weight
    can only reduce the distortion.  Gives up when every weight already
    sits exactly on a centroid (more clusters than distinct values).
    Returns (centroids, boundaries), possibly still containing empties in
    the give-up case.
    """
    k = centroids.size
    for _ in range(k):
        sizes = np.diff(b)
        empties = np.flatnonzero(sizes == 0)
        if empties.size == 0:
            break
        assigned = np.repeat(centroids, sizes)
        dist2 = (w_sorted - assigned) ** 2
        far = int(np.argmax(dist2))
        if dist2[far] == 0.0:
            break  # perfect fit already; extra clusters are unusable
        centroids = centroids.copy()
        centroids[empties[0]] = w_sorted[far]
        centroids.sort()
        b = _cluster_boundaries(w_sorted, centroids)
    return centroids, b


def _lloyd(w_sorted, centroids, max_iter, update, cost):
    """Generic 1-D Lloyd loop on sorted data.

    ``update(lo, hi)`` returns the new centroid of w_sorted[lo:hi];
    ``cost(b, centroids)`` evaluates the distortion.  Stops at an exact
    assignment fixed point (boundaries unchanged).
    """
    centroids = np.sort(np.asarray(centroids, dtype=float))
    prev_b = None
    history = []
    n_iter = 0
    b = _cluster_boundaries(w_sorted, centroids)
    for _ in range(max_iter):
        b = _cluster_boundaries(w_sorted, centroids)
        centroids, b = _repair_empty_clusters(w_sorted, centroids, b)
        if prev_b is not None and np.array_equal(b, prev_b):
            break
        n_iter += 1
        new_centroids = centroids.copy()
        for j in range(centroids.size):
            if b[j + 1] > b[j]:
                new_centroids[j] = update(b[j], b[j + 1])
        centroids = new_centroids
        history.append(cost(b, centroids))
        prev_b = b
    return centroids, b, n_iter, history


def _best_boundary_move(b, range_cost):
    """Best single-element move across a cluster boundary, if any improves.

    Returns (j, new_boundary) for the strictest distortion decrease, or
    None at a boundary-local optimum.  Used to polish Lloyd fixed points:
    1-D Lloyd stalls easily, and shifting one element between adjacent
    clusters (then re-running Lloyd) escapes the shallow minima.
    """
    best_gain, best = 0.0, None
    for j in range(len(b) - 2):
        lo, t, hi = b[j], b[j + 1], b[j + 2]
        old = range_cost(lo, t) + range_cost(t, hi)
        if t - lo >= 2:
            gain = old - range_cost(lo, t - 1) - range_cost(t - 1, hi)
            if gain > best_gain:
                best_gain, best = gain, (j, t - 1)
        if hi - t >= 2:
            gain = old - range_cost(lo, t + 1) - range_cost(t + 1, hi)
            if gain > best_gain:
                best_gain, best = gain, (j, t + 1)
    return best


def _lloyd_polished(w_sorted, centroids, max_iter, update, cost, range_cost):
    """Lloyd to a fixed point, then boundary polish, repeated to joint rest.

    Every applied move strictly decreases the distortion, so the loop
    terminates; the returned state is still a Lloyd fixed point.
    """
    history: list[float] = []
    n_iter = 0
    for _ in range(MAX_LLOYD_ITERS):
        centroids, b, it, hist = _lloyd(
            w_sorted, centroids, max_iter, update, cost
        )
        n_iter += it
        history.extend(hist)
        move = _best_boundary_move(b, range_cost)
        if move is None:
            break
        j, new_t = move
        b = b.copy()
        b[j + 1] = new_t
        centroids = centroids.copy()
        centroids[j] = update(b[j], b[j + 1])
        centroids[j + 1] = update(b[j + 1], b[j + 2])
        n_iter += 1
        history.append(cost(b, centroids))
    return centroids, b, n_iter, np.asarray(history)


def _finalize_adaptive(w, w_sorted_order, centroids, b, kind) -> QuantParams:
    """Build QuantParams from a Lloyd state, dropping unused centroids.

    Empty clusters (possible when K exceeds the number of distinct values)
    are removed so the codebook keeps its strictly-increasing invariant;
    assignments are remapped accordingly.
    """
    sizes = np.diff(b)
    used = sizes > 0
    used_centroids = centroids[used]
    # Merge any exactly-equal survivors (only reachable if the iteration
    # cap fired mid-flight).
    entries, inverse = np.unique(used_centroids, return_inverse=True)
    # Map each sorted position to its cluster, then back to input order.
    cluster_of_sorted = np.repeat(np.arange(centroids.size)[used], sizes[used])
    remap = np.empty(centroids.size, dtype=np.int64)
    remap[used] = inverse
    kappa_sorted = remap[cluster_of_sorted]
    kappa = np.empty(w.size, dtype=np.int64)
    kappa[w_sorted_order] = kappa_sorted
    return QuantParams(Codebook(entries, kind=kind), Assignments(kappa))


def _resolve_init(w_sorted, k, init, rng):
    if isinstance(init, str):
        if init != "kmeanspp":
            raise ValueError(f"unknown init: {init!r}")
        rng = np.random.default_rng(rng)
        return _kmeanspp_init(w_sorted, k, rng)
    if isinstance(init, Codebook):
        init = init.entries
    centroids = np.unique(np.asarray(init, dtype=float))
    if centroids.size != k:
        # A warm start may carry fewer entries (previous run collapsed
        # duplicates); keep the count consistent by padding from the data
        # range -- harmless because empty clusters get repaired anyway.
        pad = np.linspace(w_sorted[0], w_sorted[-1], k)
        centroids = np.unique(np.concatenate([centroids, pad]))[:k]
    return centroids


def kmeans_1d(w, k, init="kmeanspp", rng=None, max_iter=MAX_LLOYD_ITERS) -> KmeansResult:
    """Scalar k-means to a Lloyd fixed point; returns quantization + distortion.

    ``init`` is "kmeanspp" (seeded from ``rng``) or an explicit warm-start
    codebook (array or Codebook).  Each iteration costs O(K log P) thanks to
    prefix sums over the sorted weights; the distortion history is exactly
    nonincreasing and the returned state is a fixed point.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a nonempty 1-D vector")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(w, kind="stable")
    w_sorted = w[order]
    prefix1 = np.concatenate([[0.0], np.cumsum(w_sorted)])
    prefix2 = np.concatenate([[0.0], np.cumsum(w_sorted * w_sorted)])
    centroids = _resolve_init(w_sorted, k, init, rng)

    def update(lo, hi):
        return (prefix1[hi] - prefix1[lo]) / (hi - lo)

    def cost(b, c):
        return _sse(prefix1, prefix2, b, c)

    def range_cost(lo, hi):
        if hi - lo <= 0:
            return 0.0
        s = prefix1[hi] - prefix1[lo]
        return (prefix2[hi] - prefix2[lo]) - s * s / (hi - lo)

    centroids, b, n_iter, history = _lloyd_polished(
        w_sorted, centroids, max_iter, update, cost, range_cost,
    )
    params = _finalize_adaptive(w, order, centroids, b, ADAPTIVE)
    distortion = float(history[-1]) if history.size else cost(b, centroids)
    return KmeansResult(params, distortion, n_iter, history)


def kmedians_1d(w, k, init="kmeanspp", rng=None, max_iter=MAX_LLOYD_ITERS) -> KmeansResult:
    """Scalar k-medians: Lloyd with median centroids and |.| distortion.

    The even-length median is the lower of the two middle values, which is
    deterministic and keeps centroids inside the data support.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a nonempty 1-D vector")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(w, kind="stable")
    w_sorted = w[order]
    prefix1 = np.concatenate([[0.0], np.cumsum(w_sorted)])
    prefix2 = np.concatenate([[0.0], np.cumsum(w_sorted * w_sorted)])
    centroids = _resolve_init(w_sorted, k, init, rng)

    def update(lo, hi):
        return w_sorted[(lo + hi - 1) // 2]  # lower median

    def cost(b, c):
        total = 0.0
        for j in range(c.size):
            lo, hi = b[j], b[j + 1]
            if hi == lo:
                continue
            m = int(np.searchsorted(w_sorted[lo:hi], c[j], side="left")) + lo
            left = c[j] * (m - lo) - (prefix1[m] - prefix1[lo])
            right = (prefix1[hi] - prefix1[m]) - c[j] * (hi - m)
            total += left + right
        return total

    def range_cost(lo, hi):
        if hi - lo <= 0:
            return 0.0
        m = (lo + hi - 1) // 2
        c = w_sorted[m]
        left = c * (m - lo) - (prefix1[m] - prefix1[lo])
        right = (prefix1[hi] - prefix1[m + 1]) - c * (hi - m - 1)
        return left + right

    centroids, b, n_iter, history = _lloyd_polished(
        w_sorted, centroids, max_iter, update, cost, range_cost,
    )
    params = _finalize_adaptive(w, order, centroids, b, ADAPTIVE)
    distortion = float(history[-1]) if history.size else cost(b, centroids)
    return KmeansResult(params, distortion, n_iter, history)


# ---------------------------------------------------------------------------
# Fixed codebooks: binarization, ternarization, powers of two
# ---------------------------------------------------------------------------

_BINARY = Codebook(np.array([-1.0, 1.0]), kind=FIXED)
_TERNARY = Codebook(np.array([-1.0, 0.0, 1.0]), kind=FIXED)


def binarize(w) -> QuantParams:
    """Elementwise sign quantization onto {-1,+1}, with sgn(0) = +1."""
    w = np.asarray(w, dtype=float)
    kappa = (w >= 0).astype(np.int64)
    return QuantParams(_BINARY, Assignments(kappa))


def ternarize(w) -> QuantParams:
    """Quantize onto {-1,0,+1}: zero below magnitude 1/2, sign at or above."""
    w = np.asarray(w, dtype=float)
    kappa = np.where(np.abs(w) < 0.5, 1, np.where(w < 0, 0, 2)).astype(np.int64)
    return QuantParams(_TERNARY, Assignments(kappa))


def binarize_scale(w) -> QuantParams:
    """Globally optimal quantization onto {-a,+a}: a = mean |w|, signs kept.

    Exact minimizer of sum_i (w_i - a*theta_i)^2 over a and theta in
    {-1,+1}^P.  An all-zero input yields the degenerate a = 0.
    """
    w = np.asarray(w, dtype=float)
    if w.size < 1:
        raise ValueError("weights must be nonempty")
    a = float(np.mean(np.abs(w)))
    kappa = (w >= 0).astype(np.int64)
    codebook = Codebook(np.array([-1.0, 1.0]), kind=FIXED_WITH_SCALE, scale=a)
    return QuantParams(codebook, Assignments(kappa), degenerate=(a == 0.0))


def ternarize_scale(w) -> QuantParams:
    """Globally optimal quantization onto {-a,0,+a}.

    The support size j* maximizes (1/sqrt(j)) * sum of the j largest
    magnitudes; a is then the mean of those magnitudes and weights keep
    their sign iff |w_i| >= a/2 (ties stay nonzero).  An all-zero input
    yields the degenerate a = 0 with all weights at the zero entry.
    """
    w = np.asarray(w, dtype=float)
    if w.size < 1:
        raise ValueError("weights must be nonempty")
    mags = np.sort(np.abs(w))[::-1]
    if mags[0] == 0.0:
        codebook = Codebook(
            np.array([-1.0, 0.0, 1.0]), kind=FIXED_WITH_SCALE, scale=0.0
        )
        kappa = np.ones(w.size, dtype=np.int64)
        return QuantParams(codebook, Assignments(kappa), degenerate=True)
    prefix = np.cumsum(mags)
    stats = prefix / np.sqrt(np.arange(1, w.size + 1))
    j_star = int(np.argmax(stats)) + 1
    a = float(prefix[j_star - 1] / j_star)
    nonzero = np.abs(w) >= 0.5 * a
    kappa = np.where(~nonzero, 1, np.where(w < 0, 0, 2)).astype(np.int64)
    codebook = Codebook(np.array([-1.0, 0.0, 1.0]), kind=FIXED_WITH_SCALE, scale=a)
    return QuantParams(codebook, Assignments(kappa))


def pow2_codebook(c_exp: int) -> Codebook:
    """The codebook {0, +-1, +-2^-1, ..., +-2^-c_exp}, sorted ascending."""
    if c_exp < 0:
        raise ValueError("c_exp must be a nonnegative integer")
    pos = 2.0 ** -np.arange(c_exp, -1, -1.0)
    entries = np.concatenate([-pos[::-1], [0.0], pos])
    return Codebook(entries, kind=FIXED)


def pow2_quantize(w, c_exp: int) -> QuantParams:
    """Quantize onto powers of two in O(1) per weight.

    With f = -log2 |w|, the optimal level is 0 when f > c_exp+1, 1 when
    f <= 0, 2^-c_exp on (c_exp, c_exp+1], and otherwise
    2^-floor(f + log2(3/2)); the result carries the input's sign.
    """
    w = np.asarray(w, dtype=float)
    codebook = pow2_codebook(c_exp)
    with np.errstate(divide="ignore"):
        f = -np.log2(np.abs(w))  # w == 0 -> +inf -> the zero level
    exponent = np.floor(f + np.log2(1.5))
    alpha = np.where(
        f > c_exp + 1,
        0.0,
        np.where(
            f <= 0,
            1.0,
            np.where(f > c_exp, 2.0 ** -float(c_exp), 2.0**-exponent),
        ),
    )
    q = np.where(w < 0, -alpha, alpha)
    # Power-of-two levels are exact floats, so the lookup is exact.
    kappa = np.searchsorted(codebook.entries, q).astype(np.int64)
    return QuantParams(codebook, Assignments(kappa))


# ---------------------------------------------------------------------------
# Fixed codebook with an adaptive global scale
# ---------------------------------------------------------------------------

def fixed_scale_alternate(w, codebook, max_iters=MAX_LLOYD_ITERS) -> FixedScaleResult:
    """Alternate nearest-entry assignment and the optimal global scale.

    Assignment: kappa(i) = argmin_k |w_i - a*c_k|; scale: the least-squares
    a = sum_i w_i c_kappa(i) / sum_i c_kappa(i)^2.  The objective is
    nonincreasing and the loop stops at an assignment fixed point or when
    every weight sits on a zero entry (scale update undefined -> keep a).
    """
    w = np.asarray(w, dtype=float)
    if w.size < 1:
        raise ValueError("weights must be nonempty")
    if isinstance(codebook, Codebook):
        entries = codebook.entries
    else:
        entries = np.asarray(codebook, dtype=float)
    entries = np.asarray(entries, dtype=float)
    if entries.size > 1 and not np.all(np.diff(entries) > 0):
        raise ValueError("codebook entries must be strictly increasing")

    nonzero = entries[entries != 0]
    mean_abs_w = float(np.mean(np.abs(w)))
    if nonzero.size == 0 or mean_abs_w == 0.0:
        # Either every level is zero or every weight is: the scale is
        # irrelevant / undefined, so return the degenerate projection.
        a = 0.0 if mean_abs_w == 0.0 else 1.0
        # entry of smallest magnitude; ties resolve to the higher index
        tie = np.abs(entries)
        idx = entries.size - 1 - int(np.argmin(tie[::-1]))
        kappa = np.full(w.size, idx, dtype=np.int64)
        cb = Codebook(entries, kind=FIXED_WITH_SCALE, scale=a)
        params = QuantParams(cb, Assignments(kappa), degenerate=True)
        values = a * entries[kappa]
        return FixedScaleResult(params, float(np.sum((w - values) ** 2)), 0)

    a = mean_abs_w / float(np.mean(np.abs(nonzero)))
    kappa = None
    n_iter = 0
    for _ in range(max_iters):
        scaled = a * entries
        order = np.argsort(scaled, kind="stable")
        new_kappa = order[_assign_midpoints(w, scaled[order])]
        if kappa is not None and np.array_equal(new_kappa, kappa):
            break
        kappa = new_kappa
        n_iter += 1
        ck = entries[kappa]
        denom = float(np.sum(ck * ck))
        if denom == 0.0:
            break  # all weights on the zero entry; keep the previous scale
        a = float(np.sum(w * ck)) / denom

    degenerate = not a > 0
    cb = Codebook(entries, kind=FIXED_WITH_SCALE, scale=a)
    params = QuantParams(cb, Assignments(kappa), degenerate=degenerate)
    objective = float(np.sum((w - a * entries[kappa]) ** 2))
    return FixedScaleResult(params, objective, n_iter)
