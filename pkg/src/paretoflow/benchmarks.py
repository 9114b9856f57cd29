"""Synthetic multi-objective test problems and offline datasets.

All problems are minimization problems with box bounds. ``evaluate`` accepts a
single design or a batch of rows and returns objectives with the same
leading shape.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# -- problem definitions ---------------------------------------------------


def _zdt_g(x: np.ndarray) -> np.ndarray:
    return 1.0 + 9.0 * x[:, 1:].sum(axis=1) / (x.shape[1] - 1)


def zdt1(x):
    f1 = x[:, 0]
    g = _zdt_g(x)
    return np.stack([f1, g * (1.0 - np.sqrt(f1 / g))], axis=1)


def zdt2(x):
    f1 = x[:, 0]
    g = _zdt_g(x)
    return np.stack([f1, g * (1.0 - (f1 / g) ** 2)], axis=1)


def zdt3(x):
    f1 = x[:, 0]
    g = _zdt_g(x)
    r = f1 / g
    return np.stack([f1, g * (1.0 - np.sqrt(r) - r * np.sin(10.0 * np.pi * f1))], axis=1)


def zdt4(x):
    f1 = x[:, 0]
    rest = x[:, 1:]
    g = 1.0 + 10.0 * rest.shape[1] + np.sum(rest**2 - 10.0 * np.cos(4.0 * np.pi * rest), axis=1)
    return np.stack([f1, g * (1.0 - np.sqrt(f1 / g))], axis=1)


def zdt6(x):
    x1 = x[:, 0]
    f1 = 1.0 - np.exp(-4.0 * x1) * np.sin(6.0 * np.pi * x1) ** 6
    g = 1.0 + 9.0 * (x[:, 1:].sum(axis=1) / (x.shape[1] - 1)) ** 0.25
    return np.stack([f1, g * (1.0 - (f1 / g) ** 2)], axis=1)


def dtlz1(x, m=3):
    xm = x[:, m - 1 :]
    g = 100.0 * (xm.shape[1] + np.sum((xm - 0.5) ** 2 - np.cos(20.0 * np.pi * (xm - 0.5)), axis=1))
    f = np.empty((x.shape[0], m))
    for i in range(m):
        v = 0.5 * (1.0 + g)
        v = v * np.prod(x[:, : m - 1 - i], axis=1)
        if i > 0:
            v = v * (1.0 - x[:, m - 1 - i])
        f[:, i] = v
    return f


def dtlz7(x, m=3):
    xm = x[:, m - 1 :]
    g = 1.0 + 9.0 / xm.shape[1] * xm.sum(axis=1)
    head = x[:, : m - 1]
    h = m - np.sum(head / (1.0 + g[:, None]) * (1.0 + np.sin(3.0 * np.pi * head)), axis=1)
    return np.column_stack([head, (1.0 + g) * h])


def vlmop1(x):
    x = x[:, 0]
    return np.stack([x**2, (x - 2.0) ** 2], axis=1)


def vlmop2(x):
    c = 1.0 / np.sqrt(x.shape[1])
    f1 = 1.0 - np.exp(-np.sum((x - c) ** 2, axis=1))
    f2 = 1.0 - np.exp(-np.sum((x + c) ** 2, axis=1))
    return np.stack([f1, f2], axis=1)


def vlmop3(x):
    a, b = x[:, 0], x[:, 1]
    r2 = a**2 + b**2
    f1 = 0.5 * r2 + np.sin(r2)
    f2 = (3.0 * a - 2.0 * b + 4.0) ** 2 / 8.0 + (a - b + 1.0) ** 2 / 27.0 + 15.0
    f3 = 1.0 / (r2 + 1.0) - 1.1 * np.exp(-r2)
    return np.stack([f1, f2, f3], axis=1)


def omnitest(x):
    return np.stack([np.sum(np.sin(np.pi * x), axis=1), np.sum(np.cos(np.pi * x), axis=1)], axis=1)


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int
    m: int
    lower: np.ndarray
    upper: np.ndarray
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    pareto_front_hint: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.d:
            raise ValueError(f"{self.name} expects designs of width {self.d}, got shape {x.shape}")
        y = self.func(xb)
        return y[0] if single else y

    def in_bounds(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)


def _box(d, lo, hi):
    return np.full(d, float(lo)), np.full(d, float(hi))


def _make(name, d, m, lo, hi, func, hint=None):
    lower, upper = (lo, hi) if isinstance(lo, np.ndarray) else _box(d, lo, hi)
    return ProblemSpec(name, d, m, lower, upper, func, hint)


def _zdt4_bounds():
    lower = np.full(10, -5.0)
    upper = np.full(10, 5.0)
    lower[0], upper[0] = 0.0, 1.0
    return lower, upper


_REGISTRY: dict[str, Callable[[], ProblemSpec]] = {
    "zdt1": lambda: _make("zdt1", 30, 2, 0.0, 1.0, zdt1, lambda f1: 1.0 - np.sqrt(f1)),
    "zdt2": lambda: _make("zdt2", 30, 2, 0.0, 1.0, zdt2, lambda f1: 1.0 - f1**2),
    "zdt3": lambda: _make("zdt3", 30, 2, 0.0, 1.0, zdt3),
    "zdt4": lambda: _make("zdt4", 10, 2, *_zdt4_bounds(), zdt4),
    "zdt6": lambda: _make("zdt6", 10, 2, 0.0, 1.0, zdt6),
    "dtlz1": lambda: _make("dtlz1", 7, 3, 0.0, 1.0, dtlz1),
    "dtlz7": lambda: _make("dtlz7", 22, 3, 0.0, 1.0, dtlz7),
    "vlmop1": lambda: _make("vlmop1", 1, 2, -2.0, 4.0, vlmop1),
    "vlmop2": lambda: _make("vlmop2", 2, 2, -2.0, 2.0, vlmop2),
    "vlmop3": lambda: _make("vlmop3", 2, 3, -3.0, 3.0, vlmop3),
    "omnitest": lambda: _make("omnitest", 2, 2, 0.0, 6.0, omnitest),
}

PROBLEM_NAMES = tuple(_REGISTRY)


def make_problem(name: str) -> ProblemSpec:
    key = name.lower()
    if key not in _REGISTRY:
        raise KeyError(f"unknown problem {name!r}; valid names: {', '.join(PROBLEM_NAMES)}")
    return _REGISTRY[key]()


# -- datasets --------------------------------------------------------------


@dataclass
class ColumnStats:
    """Per-column min/max (used for normalization) plus mean/std for reference."""

    min: np.ndarray
    max: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def of(cls, a: np.ndarray) -> ColumnStats:
        return cls(a.min(axis=0), a.max(axis=0), a.mean(axis=0), a.std(axis=0))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("min", "max", "mean", "std")}

    @classmethod
    def from_dict(cls, d: dict) -> ColumnStats:
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("min", "max", "mean", "std")))

    def normalize(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        span = self.max - self.min
        flat = span == 0
        out = (a - self.min) / np.where(flat, 1.0, span)
        return np.where(flat, 0.5, out)

    def denormalize(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        span = self.max - self.min
        return np.where(span == 0, self.min, self.min + z * span)


@dataclass
class OfflineDataset:
    problem: str
    designs: np.ndarray
    labels: np.ndarray
    seed: int | None = None
    sampler: str = "uniform"
    x_stats: ColumnStats = field(init=False)
    y_stats: ColumnStats = field(init=False)

    def __post_init__(self):
        self.designs = np.asarray(self.designs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.designs.ndim != 2 or self.labels.ndim != 2 or len(self.designs) != len(self.labels):
            raise ValueError("designs and labels must be 2-D with matching row counts")
        if len(self.designs) == 0:
            raise ValueError("dataset must hold at least one row")
        self.x_stats = ColumnStats.of(self.designs)
        self.y_stats = ColumnStats.of(self.labels)

    @property
    def n(self) -> int:
        return len(self.designs)

    @property
    def d(self) -> int:
        return self.designs.shape[1]

    @property
    def m(self) -> int:
        return self.labels.shape[1]

    def normalized_designs(self) -> np.ndarray:
        return self.x_stats.normalize(self.designs)

    def normalized_labels(self) -> np.ndarray:
        return self.y_stats.normalize(self.labels)

    def metadata(self) -> dict:
        return {
            "problem": self.problem,
            "d": self.d,
            "m": self.m,
            "n": self.n,
            "seed": self.seed,
            "sampler": self.sampler,
            "x_stats": self.x_stats.to_dict(),
            "y_stats": self.y_stats.to_dict(),
        }


def _latin_hypercube(n, d, rng):
    cells = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    return (cells + rng.random((n, d))) / n


def generate_offline_dataset(spec: ProblemSpec, n: int, seed: int, sampler: str = "uniform") -> OfflineDataset:
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    if sampler == "uniform":
        unit = rng.random((n, spec.d))
    elif sampler == "latin-hypercube":
        unit = _latin_hypercube(n, spec.d, rng)
    else:
        raise ValueError(f"unknown sampler {sampler!r}; expected 'uniform' or 'latin-hypercube'")
    designs = np.clip(spec.lower + unit * (spec.upper - spec.lower), spec.lower, spec.upper)
    return OfflineDataset(spec.name, designs, spec.evaluate(designs), seed=seed, sampler=sampler)


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: OfflineDataset, csv_path) -> tuple[Path, Path]:
    """Write ``<name>.csv`` plus a ``<name>.json`` metadata sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"x{i}" for i in range(dataset.d)] + [f"f{j}" for j in range(dataset.m)]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(dataset.designs, dataset.labels):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in y])
    meta_path = csv_path.with_suffix(".json")
    meta_path.write_text(json.dumps(dataset.metadata(), indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def load_dataset(csv_path, expect_d: int | None = None, expect_m: int | None = None) -> OfflineDataset:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    d, m = meta["d"], meta["m"]
    if (expect_d is not None and expect_d != d) or (expect_m is not None and expect_m != m):
        raise ValueError(f"{csv_path}: dataset has d={d}, m={m}; expected d={expect_d}, m={expect_m}")
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header != [f"x{i}" for i in range(d)] + [f"f{j}" for j in range(m)]:
        raise ValueError(f"{csv_path}: header does not match d={d}, m={m}")
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, d + m)
    if len(data) != meta["n"]:
        raise ValueError(f"{csv_path}: {len(data)} rows, metadata says {meta['n']}")
    return OfflineDataset(meta["problem"], data[:, :d], data[:, d:], seed=meta["seed"], sampler=meta["sampler"])
