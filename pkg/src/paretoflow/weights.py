"""Uniform simplex weights, their angular neighborhoods and hypercone apex angles."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, replace
from math import comb
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class WeightLattice:
    weights: np.ndarray
    partitions: int
    neighbors: np.ndarray | None = None
    apex_angles: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def m(self) -> int:
        return self.weights.shape[1]


def das_dennis(m: int, partitions: int) -> WeightLattice:
    """All compositions of ``partitions`` into ``m`` non-negative parts, scaled to sum 1.

    Rows come out in lexicographic order, e.g. m=2, H=4 gives
    (0, 1), (0.25, 0.75), ..., (1, 0).
    """
    if m < 2 or partitions < 1:
        raise ValueError(f"das_dennis needs m >= 2 and H >= 1, got m={m}, H={partitions}")
    rows = []
    slots = partitions + m - 1
    for bars in itertools.combinations(range(slots), m - 1):
        edges = (-1, *bars, slots)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(m)])
    return WeightLattice(np.asarray(rows, dtype=np.float64) / partitions, partitions)


def lattice_size(m: int, partitions: int) -> int:
    return comb(partitions + m - 1, m - 1)


def choose_partitions(m: int, target_count: int) -> int:
    """Smallest H whose Das-Dennis lattice has at least ``target_count`` rows."""
    h = 1
    while lattice_size(m, h) < target_count:
        h += 1
    return h


def angle_matrix(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pairwise angles between the rows of ``u`` and ``v``, in [0, pi].

    Uses 2*atan2(|a - b|, |a + b|) on unit vectors, which stays accurate for
    nearly parallel rows where arccos loses precision.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    su = np.max(np.abs(u), axis=1, keepdims=True)
    sv = np.max(np.abs(v), axis=1, keepdims=True)
    if np.any(su == 0) or np.any(sv == 0):
        raise ValueError("angles are undefined for zero vectors")
    # rescale first so tiny rows do not underflow in the norm
    u, v = u / su, v / sv
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    nv = np.linalg.norm(v, axis=1, keepdims=True)
    a = (u / nu)[:, None, :]
    b = (v / nv)[None, :, :]
    return 2.0 * np.arctan2(np.linalg.norm(a - b, axis=2), np.linalg.norm(a + b, axis=2))


def angular_distance(u, v) -> float:
    return float(angle_matrix(u, v)[0, 0])


def build_neighbors(lattice: WeightLattice, k: int) -> WeightLattice:
    """Attach the ``k`` angularly closest rows to every weight (self first, ties by index)."""
    n = lattice.n
    if not 1 <= k <= n:
        raise ValueError(f"K must lie in [1, N={n}], got {k}")
    ang = angle_matrix(lattice.weights, lattice.weights)
    np.fill_diagonal(ang, 0.0)
    idx = np.arange(n)
    neighbors = np.empty((n, k), dtype=int)
    for i in range(n):
        not_self = (idx != i).astype(int)
        neighbors[i] = np.lexsort((idx, not_self, ang[i]))[:k]
    return replace(lattice, neighbors=neighbors)


def apex_angles(lattice: WeightLattice) -> WeightLattice:
    """Hypercone apex angle per weight: twice the mean angle to its m nearest other weights."""
    n, m = lattice.n, lattice.m
    if n <= m:
        raise ValueError(f"apex angles need N > m (N={n}, m={m})")
    ang = angle_matrix(lattice.weights, lattice.weights)
    np.fill_diagonal(ang, np.inf)
    nearest = np.sort(ang, axis=1)[:, :m]
    return replace(lattice, apex_angles=2.0 * nearest.sum(axis=1) / m)


def make_lattice(m: int, target_count: int, k: int) -> WeightLattice:
    """Das-Dennis weights covering ``target_count`` with neighbors and apex angles."""
    lattice = das_dennis(m, choose_partitions(m, target_count))
    return apex_angles(build_neighbors(lattice, k))


def dump_lattice(lattice: WeightLattice, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = 0 if lattice.neighbors is None else lattice.neighbors.shape[1]
    header = [f"w{j}" for j in range(lattice.m)] + [f"nb{j}" for j in range(k)] + ["apex_angle"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(lattice.weights):
            nbs = [] if lattice.neighbors is None else lattice.neighbors[i].tolist()
            phi = "" if lattice.apex_angles is None else repr(float(lattice.apex_angles[i]))
            w.writerow([repr(float(v)) for v in row] + nbs + [phi])
    return path
