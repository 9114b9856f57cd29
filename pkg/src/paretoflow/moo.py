"""Pareto dominance, non-dominated sorting and quality indicators (minimization)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

MC_CHUNK = 100_000


def dominates(a, b) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def domination_matrix(points: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when point i dominates point j."""
    p = np.asarray(points, dtype=np.float64)
    le = np.all(p[:, None, :] <= p[None, :, :], axis=2)
    lt = np.any(p[:, None, :] < p[None, :, :], axis=2)
    return le & lt


@dataclass
class FrontPartition:
    fronts: list[list[int]]
    ranks: np.ndarray


def non_dominated_sort(points) -> FrontPartition:
    """Fast non-dominated sort in O(m N^2)."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ValueError("non_dominated_sort needs a nonempty (n, m) array")
    dom = domination_matrix(p)
    counts = dom.sum(axis=0)
    ranks = np.full(len(p), -1, dtype=int)
    fronts = []
    current = np.flatnonzero(counts == 0)
    k = 0
    while current.size:
        ranks[current] = k
        fronts.append(current.tolist())
        counts = counts - dom[current].sum(axis=0)
        counts[ranks >= 0] = -1
        current = np.flatnonzero(counts == 0)
        k += 1
    return FrontPartition(fronts, ranks)


def crowding_distance(points) -> np.ndarray:
    """NSGA-II crowding distance of the points of a single front.

    Objectives with zero range contribute nothing (so they never assign
    infinities). Identical objective vectors share one value.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ValueError("crowding_distance needs a nonempty (n, m) array")
    uniq, inverse = np.unique(p, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    dist = np.zeros(len(uniq))
    if len(uniq) <= 2:
        span = uniq.max(axis=0) - uniq.min(axis=0)
        if np.any(span > 0):
            dist[:] = np.inf
        return dist[inverse]
    for j in range(uniq.shape[1]):
        order = np.argsort(uniq[:, j], kind="stable")
        col = uniq[order, j]
        span = col[-1] - col[0]
        if span == 0:
            continue
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist[inverse]


def rank_order(points) -> np.ndarray:
    """Indices sorted best first: front rank, then crowding distance descending, then index."""
    p = np.asarray(points, dtype=np.float64)
    part = non_dominated_sort(p)
    crowd = np.empty(len(p))
    for front in part.fronts:
        crowd[front] = crowding_distance(p[front])
    return np.lexsort((np.arange(len(p)), -crowd, part.ranks))


def select_top(points, k: int) -> np.ndarray:
    """Indices of the ``k`` best points under :func:`rank_order`."""
    if k > len(points):
        raise ValueError(f"cannot select {k} of {len(points)} points")
    return rank_order(points)[:k]


def reference_point(labels, scale: float = 1.1) -> np.ndarray:
    """Push the per-objective maximum of ``labels`` away from the ideal point by ``scale``."""
    y = np.asarray(labels, dtype=np.float64)
    lo, hi = y.min(axis=0), y.max(axis=0)
    return lo + scale * (hi - lo)


# -- hypervolume -----------------------------------------------------------


def _hv2d(p: np.ndarray, ref: np.ndarray) -> float:
    if len(p) == 0:
        return 0.0
    p = p[np.lexsort((p[:, 1], p[:, 0]))]
    total = 0.0
    best_y = ref[1]
    for x, y in p:
        if y < best_y:
            total += (ref[0] - x) * (best_y - y)
            best_y = y
    return total


def _hv3d(p: np.ndarray, ref: np.ndarray) -> float:
    if len(p) == 0:
        return 0.0
    p = p[np.argsort(p[:, 2], kind="stable")]
    levels = np.append(np.unique(p[:, 2]), ref[2])
    total = 0.0
    for lo, hi in zip(levels[:-1], levels[1:]):
        if hi <= lo:
            continue
        total += _hv2d(p[p[:, 2] <= lo][:, :2], ref[:2]) * (hi - lo)
    return total


def _mc_chunk(p, lower, upper, seed, chunk, size):
    rng = np.random.default_rng([seed, chunk])
    s = lower + rng.random((size, len(lower))) * (upper - lower)
    covered = np.zeros(size, dtype=bool)
    for q in p:
        covered |= np.all(s >= q, axis=1)
    return int(covered.sum())


def hypervolume(
    points,
    ref,
    method: str = "auto",
    nsamples: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Volume dominated by ``points`` and bounded above by ``ref``.

    ``method`` is ``exact2d``, ``exact3d``, ``montecarlo`` or ``auto`` (exact
    for m <= 3). Points not component-wise <= ref are ignored. Monte-Carlo
    samples come in fixed chunks with per-chunk seeds, so the estimate is
    independent of ``workers``.
    """
    ref = np.asarray(ref, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64).reshape(-1, len(ref))
    p = p[np.all(p <= ref, axis=1)]
    m = len(ref)
    if method == "auto":
        method = {2: "exact2d", 3: "exact3d"}.get(m, "montecarlo")
    if method == "exact2d":
        if m != 2:
            raise ValueError(f"exact2d needs m=2, got m={m}; use method='montecarlo'")
        return _hv2d(p, ref)
    if method == "exact3d":
        if m != 3:
            raise ValueError(f"exact3d needs m=3, got m={m}; use method='montecarlo'")
        return _hv3d(p, ref)
    if method != "montecarlo":
        raise ValueError(f"unknown hypervolume method {method!r}")
    if len(p) == 0:
        return 0.0
    lower = p.min(axis=0)
    box = float(np.prod(ref - lower))
    if box == 0.0:
        return 0.0
    sizes = [min(MC_CHUNK, nsamples - start) for start in range(0, nsamples, MC_CHUNK)]
    jobs = [(p, lower, ref, seed, i, size) for i, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = list(pool.map(lambda a: _mc_chunk(*a), jobs))
    else:
        hits = [_mc_chunk(*a) for a in jobs]
    return box * sum(hits) / nsamples


def percentile_hv(points, ref, percentile: float = 100, **hv_kwargs) -> float:
    """Hypervolume after dropping the best ``(100 - percentile)%`` of points.

    Points are ranked by :func:`rank_order`; the number removed is rounded
    down.
    """
    p = np.asarray(points, dtype=np.float64)
    if len(p) == 0:
        raise ValueError("percentile_hv needs at least one point")
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    n_remove = int(np.floor(len(p) * (100 - percentile) / 100))
    keep = rank_order(p)[n_remove:]
    if keep.size == 0:
        raise ValueError("percentile removal leaves no points")
    return hypervolume(p[keep], ref, **hv_kwargs)


def pairwise_diversity(points) -> float:
    """Mean Euclidean distance over unordered pairs."""
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    if n < 2:
        raise ValueError("pairwise_diversity needs at least two points")
    diff = p[:, None, :] - p[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return float(np.sum(np.triu(dist, 1)) / (n * (n - 1) / 2))
