"""Dense feed-forward networks in plain numpy.

Everything runs in float64. Networks expose the three derivative queries the
rest of the package needs: parameter gradients of a mean-squared error,
vector-Jacobian products with respect to the input, and scalar input
gradients. Parameters are trained with Adam.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "selu", "identity")
EMBEDDING_MODES = ("scalar-append", "sinusoidal")

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "selu":
        return SELU_SCALE * np.where(z > 0.0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_derivative(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "selu":
        return SELU_SCALE * np.where(z > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class TimeEmbedding:
    """How the time scalar is fed to a time-conditioned network.

    ``scalar-append`` concatenates t to the input (width 1). ``sinusoidal``
    appends ``dim`` features, half sines and half cosines over geometrically
    spaced frequencies.
    """

    mode: str = "scalar-append"
    dim: int = 0

    def __post_init__(self):
        if self.mode not in EMBEDDING_MODES:
            raise ValueError(f"unknown time embedding {self.mode!r}; expected one of {EMBEDDING_MODES}")
        if self.mode == "sinusoidal" and (self.dim <= 0 or self.dim % 2):
            raise ValueError("sinusoidal embedding needs a positive even dim")

    @property
    def width(self) -> int:
        return 1 if self.mode == "scalar-append" else self.dim

    def embed(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        if self.mode == "scalar-append":
            return t
        half = self.dim // 2
        freqs = np.exp(np.linspace(0.0, np.log(1000.0), half)) * np.pi
        return np.concatenate([np.sin(t * freqs), np.cos(t * freqs)], axis=1)


class DenseNetwork:
    """Multi-layer perceptron with a shared hidden activation and linear output.

    Weight matrix ``l`` has shape ``(out_l, in_l)``; a layer computes
    ``act(x @ W.T + b)``. Initialization is Kaiming-uniform (fan-in) for ReLU
    nets and LeCun-normal otherwise; biases start at zero.
    """

    def __init__(
        self,
        layer_sizes,
        activation: str = "relu",
        rng_seed: int = 0,
        weights: list[np.ndarray] | None = None,
        biases: list[np.ndarray] | None = None,
    ):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes must hold at least two positive ints, got {layer_sizes}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
        self.layer_sizes = sizes
        self.activation = activation
        self.rng_seed = int(rng_seed)

        if weights is None:
            rng = np.random.default_rng(self.rng_seed)
            weights, biases = [], []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                if activation == "relu":
                    bound = np.sqrt(6.0 / fan_in)
                    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
                else:
                    w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_out, fan_in))
                weights.append(w)
                biases.append(np.zeros(fan_out))
        elif biases is None:
            raise ValueError("biases must be given together with weights")

        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (sizes[l + 1], sizes[l])
            if w.shape != expected or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l}: weight {w.shape} / bias {b.shape} inconsistent with {expected}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in the order ``[W0, b0, W1, b1, ...]`` (live references)."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy(self) -> DenseNetwork:
        return copy.deepcopy(self)

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input of width {self.in_dim}, got shape {np.shape(x)}")
        return x, single

    def _forward_trace(self, x: np.ndarray):
        pre, post = [], [x]
        h = x
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = z if l == last else activate(z, self.activation)
            post.append(h)
        return pre, post

    def forward(self, x) -> np.ndarray:
        """Evaluate the network on one input vector or a batch of rows."""
        x, single = self._as_batch(x)
        h = x
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l != last:
                h = activate(h, self.activation)
        return h[0] if single else h

    __call__ = forward

    def _backward(self, pre, post, grad_out, want_params: bool):
        grads = []
        delta = grad_out
        for l in range(self.n_layers - 1, -1, -1):
            if l != self.n_layers - 1:
                delta = delta * activation_derivative(pre[l], self.activation)
            if want_params:
                grads.append((delta.T @ post[l], delta.sum(axis=0)))
            delta = delta @ self.weights[l]
        if want_params:
            grads.reverse()
            return [g for pair in grads for g in pair], delta
        return None, delta

    def param_gradients(self, inputs, targets) -> tuple[float, list[np.ndarray]]:
        """Mean-squared error and its exact gradient for every parameter.

        The loss is the batch mean of the squared Euclidean error per row.
        Gradients come back in :meth:`parameters` order.
        """
        x, _ = self._as_batch(inputs)
        y = np.asarray(targets, dtype=np.float64).reshape(x.shape[0], -1)
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        if y.shape[1] != self.out_dim:
            raise ValueError(f"targets have width {y.shape[1]}, network outputs {self.out_dim}")
        pre, post = self._forward_trace(x)
        resid = post[-1] - y
        n = x.shape[0]
        loss = float(np.sum(resid * resid) / n)
        grads, _ = self._backward(pre, post, 2.0 * resid / n, want_params=True)
        return loss, grads

    def vjp_input(self, inputs, cotangent) -> np.ndarray:
        """Row-wise vector-Jacobian product ``cotangent @ d(output)/d(input)``."""
        x, single = self._as_batch(inputs)
        c = np.asarray(cotangent, dtype=np.float64).reshape(x.shape[0], self.out_dim)
        pre, post = self._forward_trace(x)
        _, dx = self._backward(pre, post, c, want_params=False)
        return dx[0] if single else dx

    def input_gradient(self, x, coefficients=None) -> np.ndarray:
        """Gradient of a scalar output (or a fixed linear reduction) w.r.t. the input."""
        if coefficients is None:
            if self.out_dim != 1:
                raise ValueError("network output is not scalar; pass reduction coefficients")
            coefficients = np.ones(1)
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if coefficients.shape != (self.out_dim,):
            raise ValueError(f"need {self.out_dim} reduction coefficients, got {coefficients.shape}")
        xb, single = self._as_batch(x)
        g = self.vjp_input(xb, np.broadcast_to(coefficients, (xb.shape[0], self.out_dim)))
        return g[0] if single else g


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr_decay: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr_decay: float = 1.0

    @classmethod
    def for_network(cls, net: DenseNetwork, config: AdamConfig | None = None) -> AdamState:
        config = config or AdamConfig()
        zeros = [np.zeros_like(p) for p in net.parameters()]
        return cls(
            first_moment=zeros,
            second_moment=[z.copy() for z in zeros],
            **asdict(config),
        )

    def end_epoch(self) -> None:
        self.learning_rate *= self.lr_decay


def adam_step(net: DenseNetwork, grads: list[np.ndarray], state: AdamState) -> tuple[DenseNetwork, AdamState]:
    """One bias-corrected Adam update, applied to ``net`` in place."""
    params = net.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match network parameters")
    state.step_count += 1
    k = state.step_count
    c1 = 1.0 - state.beta1**k
    c2 = 1.0 - state.beta2**k
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return net, state


def train_regressor(
    net: DenseNetwork,
    inputs: np.ndarray,
    targets: np.ndarray,
    epochs: int,
    batch_size: int,
    adam: AdamConfig | None = None,
    rng_seed: int = 0,
) -> tuple[DenseNetwork, list[float]]:
    """Shuffled mini-batch MSE training. Returns the net (trained in place) and per-epoch loss."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(len(x), -1)
    if len(x) == 0:
        raise ValueError("empty dataset")
    state = AdamState.for_network(net, adam)
    rng = np.random.default_rng(rng_seed)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = net.param_gradients(x[idx], y[idx])
            adam_step(net, grads, state)
            total += loss * len(idx)
        history.append(total / len(x))
        state.end_epoch()
    return net, history


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_FORMAT = "paretoflow-dense-v1"


def save_checkpoint(path, net: DenseNetwork, header: dict | None = None) -> Path:
    """Write ``net`` plus a JSON header to an ``.npz`` container.

    Parameters are stored as little-endian float64, so a save/load round trip
    is bit-exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "layer_sizes": net.layer_sizes,
        "activation": net.activation,
        "rng_seed": net.rng_seed,
        **(header or {}),
    }
    arrays = {"header": np.array(json.dumps(meta, sort_keys=True))}
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{l}"] = w.astype("<f8")
        arrays[f"b{l}"] = b.astype("<f8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[DenseNetwork, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["header"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
        n = len(meta["layer_sizes"]) - 1
        weights = [data[f"W{l}"].astype(np.float64) for l in range(n)]
        biases = [data[f"b{l}"].astype(np.float64) for l in range(n)]
    net = DenseNetwork(meta["layer_sizes"], meta["activation"], meta["rng_seed"], weights, biases)
    return net, meta
