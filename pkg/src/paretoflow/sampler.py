"""Guided flow sampling with decomposition weights and neighboring evolution.

Each weight vector owns one sample. At every step the sample is pushed along
the flow field plus the gradient of its weighted predicted objective, a few
noisy offspring are drawn, offspring are shared between angular neighbors,
filtered to each weight's hypercone, and the best one survives. An archive
keeps the best decoded design seen for every weight.

All designs live in normalized space; predictors output min-max normalized
objectives, so lower is better.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .flow import FlowModel
from .moo import hypervolume, non_dominated_sort, select_top
from .nn import AdamConfig, DenseNetwork, train_regressor
from .weights import WeightLattice, angle_matrix, make_lattice

VARIANTS = ("full", "equal", "first", "no-local", "no-neighbor", "no-ps")
GRADIENT_MODES = ("full-chain", "stop-gradient")
IDEAL_SCOPES = ("pool", "step")
FALLBACKS = ("best-angle", "keep-all")

# Fixed row-chunk size: results stay bit-identical whatever the worker count.
CHUNK_ROWS = 128


@dataclass
class SamplerConfig:
    steps: int = 100
    gamma: float = 2.0
    gamma_threshold: float = 0.8
    noise_g: float = 0.1
    offspring: int = 5
    neighbors: int | None = None  # None -> m + 1
    target_candidates: int = 256
    gradient_mode: str = "full-chain"
    filter_fallback: str = "best-angle"
    ideal_scope: str = "pool"
    variant: str = "full"
    seed: int = 0
    workers: int = 1
    track_hv: bool = True
    debug: bool = False

    def __post_init__(self):
        if self.steps < 1 or self.offspring < 1 or self.target_candidates < 1:
            raise ValueError("steps, offspring and target_candidates must be >= 1")
        if self.neighbors is not None and self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.gamma < 0 or self.noise_g < 0:
            raise ValueError("gamma and noise_g must be non-negative")
        if not 0.0 <= self.gamma_threshold <= 1.0:
            raise ValueError("gamma_threshold must lie in [0, 1]")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.filter_fallback not in FALLBACKS:
            raise ValueError(f"filter_fallback must be one of {FALLBACKS}")
        if self.ideal_scope not in IDEAL_SCOPES:
            raise ValueError(f"ideal_scope must be one of {IDEAL_SCOPES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def ablation_variant(config: SamplerConfig, variant: str) -> SamplerConfig:
    """Configuration for one of the ablations (``full`` leaves it unchanged)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return replace(config, variant=variant)


class PredictorSet:
    """One scalar regressor per objective, evaluated on normalized designs."""

    def __init__(self, nets: list[DenseNetwork]):
        if not nets or any(n.out_dim != 1 for n in nets):
            raise ValueError("need at least one scalar-output predictor")
        if len({n.in_dim for n in nets}) != 1:
            raise ValueError("predictors disagree on the design dimension")
        self.nets = nets

    @property
    def m(self) -> int:
        return len(self.nets)

    @property
    def d(self) -> int:
        return self.nets[0].in_dim

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.column_stack([net.forward(x)[:, 0] for net in self.nets])

    def weighted_gradient(self, x, coefficients) -> np.ndarray:
        """Row-wise gradient of ``sum_k coefficients[:, k] * f_k(x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        coefficients = np.broadcast_to(np.asarray(coefficients, dtype=np.float64), (x.shape[0], self.m))
        grad = np.zeros_like(x)
        for k, net in enumerate(self.nets):
            grad += net.vjp_input(x, coefficients[:, k : k + 1])
        return grad


@dataclass
class PredictorTrainConfig:
    hidden: tuple[int, ...] = (2048, 2048)
    activation: str = "relu"
    epochs: int = 200
    batch_size: int = 128
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr_decay=0.98))

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamConfig(**self.adam)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("predictor config needs epochs >= 0 and batch_size > 0")


def train_predictors(designs, labels, config: PredictorTrainConfig, seed: int) -> tuple[PredictorSet, list[list[float]]]:
    """Fit one regressor per objective column; returns the set and per-objective loss curves."""
    x = np.asarray(designs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    nets, histories = [], []
    for k in range(y.shape[1]):
        net = DenseNetwork([x.shape[1], *config.hidden, 1], config.activation, rng_seed=seed * 1000 + k)
        _, hist = train_regressor(
            net, x, y[:, k : k + 1], config.epochs, config.batch_size, config.adam, rng_seed=seed * 1000 + k
        )
        nets.append(net)
        histories.append(hist)
    return PredictorSet(nets), histories


def weighted_score(predictions, weights) -> np.ndarray | float:
    """Negated weighted sum of predicted objectives (higher is better)."""
    p = np.asarray(predictions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if p.shape[-1] != w.shape[-1]:
        raise ValueError(f"{p.shape[-1]} predictions vs {w.shape[-1]} weights")
    s = -np.sum(p * w, axis=-1)
    return float(s) if np.ndim(s) == 0 else s


def guided_field(
    flow: FlowModel,
    predictors: PredictorSet,
    weights,
    x_t,
    t: float,
    gamma_eff: float,
    gradient_mode: str = "full-chain",
) -> np.ndarray:
    """Flow velocity plus ``gamma (1-t)/t`` times the gradient of the weighted score.

    The score is evaluated at the one-step clean estimate of ``x_t``. In
    ``full-chain`` mode its gradient is pulled back through the estimator
    (flow network included); ``stop-gradient`` treats the estimator's
    Jacobian as the identity.
    """
    if t <= 0.0 or t > 1.0:
        raise ValueError(f"guided field needs t in (0, 1], got {t}")
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    v = flow.velocity(x_t, t)
    if gamma_eff == 0.0 or t == 1.0:
        return v
    x1 = flow.estimate_x1(x_t, t)
    grad = predictors.weighted_gradient(x1, -np.asarray(weights, dtype=np.float64))
    if gradient_mode == "full-chain":
        grad = flow.estimate_x1_vjp(x_t, t, grad)
    elif gradient_mode != "stop-gradient":
        raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
    return v + gamma_eff * (1.0 - t) / t * grad


def em_step(x_t, velocity, dt: float, g: float, rng=None, noise=None) -> np.ndarray:
    """Euler-Maruyama update ``x + v dt + g sqrt(dt) eps``.

    ``eps`` is drawn from ``rng`` unless passed in as ``noise``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x_t = np.asarray(x_t, dtype=np.float64)
    out = x_t + np.asarray(velocity) * dt
    if g == 0.0:
        return out
    if noise is None:
        noise = rng.standard_normal(out.shape)
    return out + g * np.sqrt(dt) * noise


def _shifted_angles(predictions: np.ndarray, weights: np.ndarray, ideal: np.ndarray) -> np.ndarray:
    """Angles between ``predictions - ideal`` and each weight; zero vectors count as angle 0."""
    shifted = predictions - ideal
    zero = ~np.any(shifted != 0.0, axis=1)
    safe = np.where(zero[:, None], weights.mean(axis=0), shifted)
    ang = angle_matrix(safe, weights)
    ang[zero] = 0.0
    return ang


def local_filter(predictions, weight, apex_angle: float, ideal=None) -> np.ndarray:
    """Indices of candidates inside the hypercone around ``weight``.

    A candidate survives when the angle between its shifted prediction and
    the weight is at most half the apex angle. If none survive, the single
    smallest-angle candidate is kept.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    if len(p) == 0:
        raise ValueError("local_filter needs at least one candidate")
    ideal = np.zeros(p.shape[1]) if ideal is None else np.asarray(ideal, dtype=np.float64)
    ang = _shifted_angles(p, np.atleast_2d(weight), ideal)[:, 0]
    keep = np.flatnonzero(ang <= apex_angle / 2.0)
    if keep.size == 0:
        keep = np.array([int(np.argmin(ang))])
    return keep


@dataclass
class ParetoArchive:
    """Best decoded design per weight, plus its prediction and weighted score."""

    designs: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray
    from_offline: np.ndarray

    @classmethod
    def from_offline(cls, designs, predictions, weights) -> ParetoArchive:
        """Per weight, the candidate with the highest weighted score (ties: lowest index)."""
        designs = np.asarray(designs, dtype=np.float64)
        predictions = np.asarray(predictions, dtype=np.float64)
        scores = -predictions @ np.asarray(weights).T  # (candidates, N)
        best = np.argmax(scores, axis=0)
        n = len(weights)
        return cls(
            designs[best].copy(),
            predictions[best].copy(),
            scores[best, np.arange(n)].copy(),
            np.ones(n, dtype=bool),
        )

    def update(self, designs, predictions, scores) -> np.ndarray:
        """Replace every slot whose new score is strictly higher; returns the mask of replaced slots."""
        better = scores > self.scores
        self.designs[better] = designs[better]
        self.predictions[better] = predictions[better]
        self.scores[better] = scores[better]
        self.from_offline[better] = False
        return better


@dataclass
class SamplerState:
    current: np.ndarray
    t: float
    step: int
    archive: ParetoArchive | None
    trace: list[dict] = field(default_factory=list)


@dataclass
class SamplingResult:
    archive: ParetoArchive | None
    pool_designs: np.ndarray
    pool_predictions: np.ndarray
    candidate_index: np.ndarray
    terminal: np.ndarray
    diagnostics: list[dict]
    lattice: WeightLattice

    @property
    def candidates(self) -> np.ndarray:
        return self.pool_designs[self.candidate_index]

    @property
    def candidate_predictions(self) -> np.ndarray:
        return self.pool_predictions[self.candidate_index]


class GuidedSampler:
    """Runs the guided evolutionary sampling loop for fixed networks and lattice."""

    def __init__(
        self,
        flow: FlowModel,
        predictors: PredictorSet,
        config: SamplerConfig,
        lattice: WeightLattice | None = None,
    ):
        if flow.data_dim != predictors.d:
            raise ValueError(f"flow works in d={flow.data_dim}, predictors in d={predictors.d}")
        self.flow = flow
        self.predictors = predictors
        self.config = config
        m = predictors.m
        k = config.neighbors if config.neighbors is not None else m + 1
        if lattice is None:
            lattice = make_lattice(m, config.target_candidates, k)
        if lattice.neighbors is None or lattice.apex_angles is None:
            raise ValueError("lattice needs neighbors and apex angles")
        if lattice.m != m:
            raise ValueError(f"lattice has m={lattice.m}, predictors m={m}")
        if config.target_candidates > lattice.n:
            raise ValueError(f"target_candidates={config.target_candidates} exceeds N={lattice.n}")
        self.lattice = lattice

        # the ablations only change what the loop sees, never the lattice itself
        n = lattice.n
        self.weights = lattice.weights
        if config.variant == "equal":
            self.weights = np.full((n, m), 1.0 / m)
        elif config.variant == "first":
            self.weights = np.zeros((n, m))
            self.weights[:, 0] = 1.0
        self.neighbors = lattice.neighbors
        if config.variant == "no-neighbor":
            self.neighbors = np.arange(n)[:, None]
        self.apex = lattice.apex_angles
        self.use_filter = config.variant != "no-local"
        self.use_archive = config.variant != "no-ps"
        self._pool = None if config.workers == 1 else ThreadPoolExecutor(config.workers)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # -- chunked evaluation ------------------------------------------------

    def _map_rows(self, fn, *arrays) -> np.ndarray:
        n = len(arrays[0])
        bounds = [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]
        jobs = [tuple(a[s:e] for a in arrays) for s, e in bounds]
        if self._pool is None:
            parts = [fn(*job) for job in jobs]
        else:
            parts = list(self._pool.map(lambda job: fn(*job), jobs))
        return np.concatenate(parts, axis=0)

    def _field(self, x: np.ndarray, t: float) -> np.ndarray:
        if t <= 0.0:
            return self._map_rows(lambda xs: self.flow.velocity(xs, t), x)
        gamma = self.config.gamma if t > self.config.gamma_threshold else 0.0
        mode = self.config.gradient_mode
        return self._map_rows(
            lambda xs, ws: guided_field(self.flow, self.predictors, ws, xs, t, gamma, mode),
            x,
            self.weights,
        )

    def _decode(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        x1 = self._map_rows(lambda xs: self.flow.estimate_x1(xs, t), x)
        return x1, self._map_rows(self.predictors.predict, x1)

    def _pool_angles(self, preds: np.ndarray, pool: np.ndarray) -> np.ndarray:
        """Angle of every pool member's shifted prediction to its slot's weight, shape (N, K*O)."""
        cand = preds[pool]  # (N, K*O, m)
        if self.config.ideal_scope == "pool":
            ideal = cand.min(axis=1, keepdims=True)
        else:
            ideal = preds.min(axis=0)
        shifted = cand - ideal
        norm = np.linalg.norm(shifted, axis=2, keepdims=True)
        zero = norm[..., 0] == 0.0
        a = shifted / np.where(norm == 0.0, 1.0, norm)
        w = self.weights / np.linalg.norm(self.weights, axis=1, keepdims=True)
        b = w[:, None, :]
        ang = 2.0 * np.arctan2(np.linalg.norm(a - b, axis=2), np.linalg.norm(a + b, axis=2))
        ang[zero] = 0.0
        return ang

    # -- loop --------------------------------------------------------------

    def initial_state(self, offline_designs=None, offline_labels=None) -> SamplerState:
        """Gaussian start points plus an archive seeded from the offline non-dominated set."""
        n = self.lattice.n
        rng = np.random.default_rng([self.config.seed, 1])
        x0 = rng.standard_normal((n, self.flow.data_dim))
        archive = None
        if self.use_archive:
            if offline_designs is None:
                raise ValueError("the archive needs offline designs to start from")
            designs = np.asarray(offline_designs, dtype=np.float64)
            if offline_labels is not None:
                designs = designs[non_dominated_sort(offline_labels).fronts[0]]
            archive = ParetoArchive.from_offline(designs, self.predictors.predict(designs), self.weights)
        return SamplerState(x0, 0.0, 0, archive)

    def evolve_step(self, state: SamplerState) -> SamplerState:
        cfg = self.config
        n, o = self.lattice.n, cfg.offspring
        dt = 1.0 / cfg.steps
        t = state.step / cfg.steps
        s = (state.step + 1) / cfg.steps
        if s > 1.0 + 1e-12:
            raise ValueError("sampling already reached t = 1")

        velocity = self._field(state.current, t)
        noise = np.random.default_rng([cfg.seed, 2, state.step]).standard_normal((n, o, self.flow.data_dim))
        offspring = em_step(state.current[:, None, :], velocity[:, None, :], dt, cfg.noise_g, noise=noise)
        flat = offspring.reshape(n * o, -1)
        _, preds = self._decode(flat, s)

        # candidate pools: neighbor j's offspring o sits at flat row j * O + o
        k = self.neighbors.shape[1]
        pool = (self.neighbors[:, :, None] * o + np.arange(o)).reshape(n, k * o)
        rows = np.arange(n)[:, None]
        scores = (-preds @ self.weights.T)[pool, rows]
        if self.use_filter:
            angles = self._pool_angles(preds, pool)
            inside = angles <= (self.apex / 2.0)[:, None]
            masked = np.where(inside, scores, -np.inf)
            pick = np.argmax(masked, axis=1)
            empty = ~inside.any(axis=1)
            if cfg.filter_fallback == "best-angle":
                pick[empty] = np.argmin(angles[empty], axis=1)
            else:
                pick[empty] = np.argmax(scores[empty], axis=1)
            pass_rate = float(inside.mean())
        else:
            pick = np.argmax(scores, axis=1)
            pass_rate = 1.0
        winner = pool[np.arange(n), pick]
        next_x = flat[winner]
        winner_scores = scores[np.arange(n), pick]
        from_neighbor = winner // o != np.arange(n)

        updates = 0
        archive_hv = None
        if state.archive is not None:
            x1, p1 = self._decode(next_x, s)
            x1 = np.clip(x1, 0.0, 1.0)
            p1 = self._map_rows(self.predictors.predict, x1)
            before = state.archive.scores.copy()
            updates = int(state.archive.update(x1, p1, weighted_score(p1, self.weights)).sum())
            if cfg.debug:
                assert np.all(state.archive.scores >= before), "archive score decreased"
            if cfg.track_hv:
                archive_hv = hypervolume(state.archive.predictions, np.full(self.predictors.m, 1.1))

        record = {
            "step": state.step + 1,
            "t": s,
            "mean_weighted_score": float(winner_scores.mean()),
            "filter_pass_rate": pass_rate,
            "neighbor_win_fraction": float(from_neighbor.mean()),
            "archive_updates": updates,
        }
        if archive_hv is not None:
            record["archive_hv"] = archive_hv
        return SamplerState(next_x, s, state.step + 1, state.archive, state.trace + [record])

    def run(self, offline_designs=None, offline_labels=None) -> SamplingResult:
        """Full sampling loop and final candidate selection.

        ``offline_designs`` are normalized designs; when ``offline_labels`` is
        given only the non-dominated rows seed the archive.
        """
        try:
            state = self.initial_state(offline_designs, offline_labels)
            for _ in range(self.config.steps):
                state = self.evolve_step(state)
        finally:
            self.close()
        terminal = state.current
        if state.archive is not None:
            pool_designs, pool_preds = state.archive.designs, state.archive.predictions
        else:
            pool_designs = np.clip(terminal, 0.0, 1.0)
            pool_preds = self.predictors.predict(pool_designs)
        idx = select_top(pool_preds, self.config.target_candidates)
        return SamplingResult(state.archive, pool_designs, pool_preds, idx, terminal, state.trace, self.lattice)


def run(flow, predictors, offline_designs, offline_labels, config: SamplerConfig, lattice=None) -> SamplingResult:
    return GuidedSampler(flow, predictors, config, lattice).run(offline_designs, offline_labels)
