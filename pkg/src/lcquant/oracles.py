"""Brute-force reference implementations for test and acceptance use.

These deliberately share no code with the production quantizers: they
enumerate, scan, or run dynamic programs, trading speed for being obviously
correct.  Size caps keep full oracle sweeps under a minute.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "brute_binarize_scale",
    "brute_ternarize_scale",
    "brute_nearest",
    "kmeans_1d_dp",
]


def _all_patterns(symbols, p):
    return np.array(list(itertools.product(symbols, repeat=p)))


def brute_binarize_scale(w):
    """Exhaustive minimum of sum (w_i - a*theta_i)^2 over theta in {-1,+1}^P.

    For each sign pattern the optimal scale is closed-form,
    a = (1/P) sum w_i theta_i, which reduces the objective to
    sum w^2 - (sum w theta)^2 / P; the enumeration is batched over the
    full 2^P pattern matrix.  Returns (a, theta, objective).
    """
    w = np.asarray(w, dtype=float)
    p = w.size
    if p > 16:
        raise ValueError("brute_binarize_scale capped at P <= 16")
    patterns = _all_patterns((-1.0, 1.0), p)
    dots = patterns @ w
    best = int(np.argmin(-dots * dots))  # maximize (sum w theta)^2
    theta = patterns[best]
    a = float(dots[best]) / p
    return a, theta, float(np.sum((w - a * theta) ** 2))


def brute_ternarize_scale(w):
    """Exhaustive minimum of sum (w_i - a*theta_i)^2 over theta in {-1,0,+1}^P.

    Optimal scale per pattern: a = sum w_i theta_i / sum theta_i^2 (zero
    support means a = 0), reducing the objective to
    sum w^2 - (sum w theta)^2 / support.  Returns (a, theta, objective).
    """
    w = np.asarray(w, dtype=float)
    p = w.size
    if p > 10:
        raise ValueError("brute_ternarize_scale capped at P <= 10")
    patterns = _all_patterns((-1.0, 0.0, 1.0), p)
    support = np.sum(patterns * patterns, axis=1)
    dots = patterns @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        reduction = np.where(support > 0, dots * dots / support, 0.0)
    best = int(np.argmax(reduction))
    theta = patterns[best]
    a = float(dots[best] / support[best]) if support[best] > 0 else 0.0
    return a, theta, float(np.sum((w - a * theta) ** 2))


def brute_nearest(w, codebook, scale=None):
    """Nearest codebook level per weight by linear scan.

    ``codebook`` is any 1-D array of levels; when ``scale`` is given the
    levels are scale*codebook.  Exact distance ties resolve to the highest
    index, matching the production midpoint convention.
    """
    w = np.asarray(w, dtype=float)
    levels = np.asarray(codebook, dtype=float)
    if scale is not None:
        levels = scale * levels
    kappa = np.empty(w.size, dtype=np.int64)
    for i, t in enumerate(w):
        best_k = 0
        best_d = abs(t - levels[0])
        for k in range(1, levels.size):
            d = abs(t - levels[k])
            if d <= best_d:
                best_d = d
                best_k = k
        kappa[i] = best_k
    return kappa


def kmeans_1d_dp(w, k):
    """Exact optimal 1-D k-means by dynamic programming over sorted data.

    Optimal clusters of sorted scalars are contiguous runs, so the DP over
    split points is exact.  Returns (codebook, optimal distortion); the
    codebook contains the means of the optimal partition (duplicates and
    unused capacity collapse when k exceeds the number of distinct values).
    """
    w = np.asarray(w, dtype=float)
    p = w.size
    if p > 512 or k > 16:
        raise ValueError("kmeans_1d_dp capped at P <= 512, K <= 16")
    if p < 1 or k < 1:
        raise ValueError("need P >= 1 and K >= 1")
    x = np.sort(w)
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def run_cost(a, b):
        # SSE of x[a:b] around its mean
        n = b - a
        s = s1[b] - s1[a]
        return (s2[b] - s2[a]) - s * s / n

    # cost[a, b-1] = SSE of x[a:b]
    idx_a, idx_b = np.meshgrid(np.arange(p), np.arange(1, p + 1), indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        n = idx_b - idx_a
        s = s1[idx_b] - s1[idx_a]
        cost = (s2[idx_b] - s2[idx_a]) - s * s / np.maximum(n, 1)
    cost[n <= 0] = np.inf

    # dp[j][i] = best cost of splitting x[:i+1] into j+1 clusters
    dp = np.full((k, p), np.inf)
    arg = np.zeros((k, p), dtype=np.int64)
    dp[0] = cost[0]
    for j in range(1, k):
        for i in range(p):
            # last cluster is x[a:i+1] for some a in [j, i]
            cand = dp[j - 1, j - 1 : i] + cost[j : i + 1, i]
            if cand.size == 0:
                # fewer points than clusters: reuse the (j)-cluster solution
                dp[j, i] = dp[j - 1, i]
                arg[j, i] = i + 1  # marks "no extra cluster"
                continue
            amin = int(np.argmin(cand))
            dp[j, i] = cand[amin]
            arg[j, i] = amin + j  # start index of the last cluster

    # Backtrack split points for k clusters over all p points.
    bounds = []
    j, end = k - 1, p - 1
    while j >= 0 and end >= 0:
        if j == 0:
            bounds.append((0, end + 1))
            break
        start = arg[j, end]
        if start == end + 1:  # unused cluster slot
            j -= 1
            continue
        bounds.append((start, end + 1))
        end = start - 1
        j -= 1
    bounds.reverse()
    centroids = np.array([(s1[b] - s1[a]) / (b - a) for a, b in bounds])
    distortion = float(sum(run_cost(a, b) for a, b in bounds))
    return np.unique(centroids), distortion
