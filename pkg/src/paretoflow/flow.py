"""Conditional flow matching on the normalized design space.

The vector field regresses onto ``x1 - x0`` along straight paths
``x_t = (1 - t) x0 + t x1`` with ``x0 ~ N(0, I)``. A trained field also gives a
one-step estimate of the clean sample, ``x1_hat = x_t + (1 - t) v(x_t, t)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nn import AdamConfig, AdamState, DenseNetwork, TimeEmbedding, adam_step, load_checkpoint, save_checkpoint


@dataclass
class FlowTrainConfig:
    hidden: tuple[int, ...] = (512, 512, 512)
    activation: str = "selu"
    epochs: int = 1000
    batch_size: int = 128
    patience: int = 20
    val_fraction: float = 0.1
    val_draws: int = 8
    adam: AdamConfig = field(default_factory=AdamConfig)
    embedding: str = "scalar-append"
    embedding_dim: int = 0

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamConfig(**self.adam)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 0 or self.batch_size <= 0 or self.patience <= 0 or self.val_draws <= 0:
            raise ValueError("flow config needs epochs >= 0 and positive batch_size, patience, val_draws")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class FlowHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int | None = None


class FlowModel:
    """A time-conditioned vector field over ``data_dim`` dimensions."""

    def __init__(self, net: DenseNetwork, embedding: TimeEmbedding, data_dim: int):
        if net.in_dim != data_dim + embedding.width or net.out_dim != data_dim:
            raise ValueError(
                f"network {net.layer_sizes} does not fit data_dim={data_dim} with embedding width {embedding.width}"
            )
        self.net = net
        self.embedding = embedding
        self.data_dim = data_dim

    @classmethod
    def initialize(cls, data_dim: int, config: FlowTrainConfig, seed: int) -> FlowModel:
        emb = TimeEmbedding(config.embedding, config.embedding_dim)
        sizes = [data_dim + emb.width, *config.hidden, data_dim]
        return cls(DenseNetwork(sizes, config.activation, rng_seed=seed), emb, data_dim)

    def _inputs(self, x: np.ndarray, t) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return np.concatenate([x, self.embedding.embed(t)], axis=1)

    def velocity(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.net.forward(self._inputs(x, t))

    def velocity_vjp(self, x, t, cotangent) -> np.ndarray:
        """``cotangent @ dv/dx`` row-wise (time held fixed)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.net.vjp_input(self._inputs(x, t), cotangent)[:, : self.data_dim]

    def estimate_x1(self, x_t, t: float) -> np.ndarray:
        """One-step clean-sample estimate; returns ``x_t`` itself at t = 1."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        if t == 1.0:
            return x_t.copy()
        return x_t + (1.0 - t) * self.velocity(x_t, t)

    def estimate_x1_vjp(self, x_t, t: float, cotangent) -> np.ndarray:
        """Pull ``cotangent`` (w.r.t. x1_hat) back to x_t through the estimator."""
        cotangent = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
        if t == 1.0:
            return cotangent.copy()
        return cotangent + (1.0 - t) * self.velocity_vjp(x_t, t, cotangent)


def fm_loss_batch(model: FlowModel, x1, rng=None, t=None, x0=None) -> tuple[float, list[np.ndarray]]:
    """Flow-matching loss and parameter gradients on one batch.

    ``t`` and ``x0`` are drawn from ``rng`` unless given explicitly.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    n = x1.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if t is None:
        t = rng.random(n)
    if x0 is None:
        x0 = rng.standard_normal(x1.shape)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    return model.net.param_gradients(model._inputs(x_t, t), x1 - x0)


def _split(n: int, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(round(fraction * n)) if n >= 2 else 0
    if fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    return order[n_val:], order[:n_val]


def train_flow(x1_data, config: FlowTrainConfig, seed: int) -> tuple[FlowModel, FlowHistory]:
    """Train a vector field with early stopping on a held-out split.

    Validation rows get ``val_draws`` frozen (t, x0) draws each, so the
    monitored loss is comparable across epochs. The best-validation parameters are restored.
    """
    data = np.atleast_2d(np.asarray(x1_data, dtype=np.float64))
    if len(data) == 0:
        raise ValueError("empty dataset")
    model = FlowModel.initialize(data.shape[1], config, seed)
    history = FlowHistory()
    if config.epochs == 0:
        return model, history

    rng = np.random.default_rng([seed, 1])
    train_idx, val_idx = _split(len(data), config.val_fraction, rng)
    train = data[train_idx]
    val = np.repeat(data[val_idx], config.val_draws, axis=0)
    val_t = rng.random(len(val))
    val_x0 = rng.standard_normal(val.shape)

    state = AdamState.for_network(model.net, config.adam)
    best = np.inf
    best_params = None
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = train[order[start : start + config.batch_size]]
            loss, grads = fm_loss_batch(model, batch, rng)
            adam_step(model.net, grads, state)
            total += loss * len(batch)
        state.end_epoch()
        history.train_loss.append(total / len(train))
        monitored = history.train_loss[-1]
        if len(val):
            monitored, _ = fm_loss_batch(model, val, t=val_t, x0=val_x0)
            history.val_loss.append(monitored)
        if monitored < best:
            best, stale = monitored, 0
            best_params = [p.copy() for p in model.net.parameters()]
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    for p, saved in zip(model.net.parameters(), best_params):
        p[...] = saved
    return model, history


def sample_ode(model: FlowModel, n: int, steps: int, seed: int) -> np.ndarray:
    """Plain Euler integration of the learned ODE from Gaussian noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, model.data_dim))
    dt = 1.0 / steps
    for k in range(steps):
        x = x + model.velocity(x, k * dt) * dt
    return x


def reconstruction_curve(model: FlowModel, x1_data, ts, n_pairs: int = 500, seed: int = 0) -> list[tuple[float, float]]:
    """Mean ``|x1_hat(x_t) - x1|`` at each t, for recalibrating the guidance threshold."""
    data = np.atleast_2d(np.asarray(x1_data, dtype=np.float64))
    rng = np.random.default_rng(seed)
    x1 = data[rng.integers(0, len(data), n_pairs)]
    x0 = rng.standard_normal(x1.shape)
    out = []
    for t in ts:
        t = float(t)
        x_t = (1.0 - t) * x0 + t * x1
        err = np.linalg.norm(model.estimate_x1(x_t, t) - x1, axis=1)
        out.append((t, float(err.mean())))
    return out


def save_flow(path, model: FlowModel, config: FlowTrainConfig, seed: int, history: FlowHistory | None = None) -> Path:
    cfg = asdict(config)
    cfg["hidden"] = list(config.hidden)
    header = {
        "kind": "flow",
        "data_dim": model.data_dim,
        "embedding": {"mode": model.embedding.mode, "dim": model.embedding.dim},
        "train_config": cfg,
        "seed": seed,
        "history": asdict(history) if history else None,
    }
    return save_checkpoint(path, model.net, header)


def load_flow(path) -> tuple[FlowModel, dict]:
    net, meta = load_checkpoint(path)
    if meta.get("kind") != "flow":
        raise ValueError(f"{path} is not a flow checkpoint")
    emb = TimeEmbedding(meta["embedding"]["mode"], meta["embedding"]["dim"])
    return FlowModel(net, emb, meta["data_dim"]), meta
