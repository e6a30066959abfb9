"""A small fully connected softmax classifier trained by SGD+momentum or Adam.

The network only ever sees gradients supplied from outside: callers compute
dLoss/dProbs (or dLoss/dLogits) with :mod:`labelcorr.losses` and hand them to
:func:`backprop_per_sample` / :func:`backprop_batch`.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")
OPTIMIZERS = ("sgd_momentum", "adam")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: Tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError(f"need at least input and output sizes, got {self.layer_sizes}")
        if any(s <= 0 for s in self.layer_sizes):
            raise ConfigError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def label_count(self):
        return self.layer_sizes[-1]


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_scale: float = 0.0
    lr_schedule: Sequence[Tuple[int, float]] = ()
    batch_size: int = 128

    def __post_init__(self):
        self.lr_schedule = tuple((int(e), float(m)) for e, m in self.lr_schedule)
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("momentum", "adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.l2_scale < 0:
            raise ConfigError("l2_scale must be non-negative")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        epochs = [e for e, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError("lr_schedule epochs must be strictly increasing")
        if any(m <= 0 for _, m in self.lr_schedule):
            raise ConfigError("lr_schedule multipliers must be positive")

    def lr_at(self, epoch):
        """Base rate times every multiplier whose threshold epoch has been reached."""
        lr = self.learning_rate
        for threshold, mult in self.lr_schedule:
            if epoch >= threshold:
                lr *= mult
        return lr


@dataclass
class Gradient:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __add__(self, other):
        return Gradient(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scale(self, factor):
        return Gradient([w * factor for w in self.weights], [b * factor for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def is_finite(self):
        return all(np.isfinite(a).all() for a in self.weights + self.biases)


@dataclass
class NetworkState:
    spec: NetworkSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    @property
    def parameter_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self):
        """Parameters in the fixed order weight_0, bias_0, weight_1, ..."""
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self):
        return NetworkState(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.step_count,
        )


def init_network(spec):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from ``spec.seed``; biases zero."""
    rng = np.random.default_rng(int(spec.seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    state = NetworkState(spec, weights, biases)
    state.first_moment = [np.zeros_like(p) for p in state.params()]
    state.second_moment = [np.zeros_like(p) for p in state.params()]
    return state


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(kind, z, h):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - h * h


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_features(state, features):
    x = np.asarray(features, dtype=np.float64)
    d = state.spec.layer_sizes[0]
    if x.shape[-1] != d:
        raise ShapeError(f"expected {d} features, got {x.shape[-1]}")
    return x


def _forward(state, x):
    """Return per-layer pre-activations and activations for a batch ``x``."""
    acts = [x]
    pre = []
    h = x
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else _activate(state.spec.activation, z)
        acts.append(h)
    return pre, acts


def logits_batch(state, features):
    x = np.atleast_2d(_check_features(state, features))
    return _forward(state, x)[1][-1]


def predict_batch(state, features):
    return softmax(logits_batch(state, features))


def predict(state, features):
    x = _check_features(state, features)
    if x.ndim != 1:
        raise ShapeError("predict takes a single feature vector; use predict_batch")
    return predict_batch(state, x[None, :])[0]


def backprop_batch(state, features, dlogits):
    """Mean gradient over the batch given dLoss/dLogits for each row."""
    x = np.atleast_2d(_check_features(state, features))
    g = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))
    if g.shape != (x.shape[0], state.spec.label_count):
        raise ShapeError(f"dlogits shape {g.shape} does not match batch")
    if not np.isfinite(g).all():
        raise NumericError("non-finite loss gradient")
    pre, acts = _forward(state, x)
    n = x.shape[0]
    gw = [None] * len(state.weights)
    gb = [None] * len(state.weights)
    delta = g
    for i in range(len(state.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i] / n
        gb[i] = delta.sum(axis=0) / n
        if i > 0:
            back = delta @ state.weights[i]
            delta = back * _activate_grad(state.spec.activation, pre[i - 1], acts[i])
    return Gradient(gw, gb)


def softmax_vjp(probs, dprobs):
    """Pull dLoss/dProbs back through the softmax to dLoss/dLogits."""
    pg = probs * dprobs
    return pg - probs * pg.sum(axis=-1, keepdims=True)


def backprop_per_sample(state, features, dloss_dprobs):
    """Parameter gradient of one sample's loss, given dLoss/dProbs."""
    x = _check_features(state, features)
    if x.ndim != 1:
        raise ShapeError("backprop_per_sample takes a single feature vector")
    g = np.asarray(dloss_dprobs, dtype=np.float64)
    if g.shape != (state.spec.label_count,):
        raise ShapeError(f"dLoss/dProbs must have length {state.spec.label_count}")
    if not np.isfinite(g).all():
        raise NumericError("non-finite dLoss/dProbs")
    probs = predict(state, x)
    return backprop_batch(state, x[None, :], softmax_vjp(probs, g)[None, :])


def apply_update(state, grad, config, epoch):
    """One optimizer step in place; returns ``state`` for chaining."""
    params = state.params()
    grads = [a for pair in zip(grad.weights, grad.biases) for a in pair]
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ShapeError("gradient shapes do not match network parameters")
    if epoch < 0:
        raise ConfigError("epoch must be non-negative")
    lr = config.lr_at(epoch)
    state.step_count += 1
    t = state.step_count
    for idx, (p, g) in enumerate(zip(params, grads)):
        if config.l2_scale and idx % 2 == 0:
            g = g + config.l2_scale * p
        if config.kind == "sgd_momentum":
            v = state.first_moment[idx]
            v *= config.momentum
            v += g
            p -= lr * v
        else:
            m, s = state.first_moment[idx], state.second_moment[idx]
            b1, b2 = config.adam_beta1, config.adam_beta2
            m *= b1
            m += (1.0 - b1) * g
            s *= b2
            s += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**t)
            s_hat = s / (1.0 - b2**t)
            p -= lr * m_hat / (np.sqrt(s_hat) + config.adam_eps)
    for p in params:
        if not np.isfinite(p).all():
            raise NumericError(f"non-finite parameters after step {t}")
    return state


def save_checkpoint(state, path):
    arrays = {}
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(
        path,
        layer_sizes=np.asarray(state.spec.layer_sizes, dtype=np.int64),
        activation=np.asarray(state.spec.activation),
        seed=np.asarray(state.spec.seed, dtype=np.uint64),
        step_count=np.asarray(state.step_count),
        **arrays,
    )


def load_checkpoint(path):
    with np.load(path) as data:
        spec = NetworkSpec(
            tuple(int(s) for s in data["layer_sizes"]),
            str(data["activation"]),
            int(data["seed"]),
        )
        n = len(spec.layer_sizes) - 1
        weights = [data[f"w{i}"].copy() for i in range(n)]
        biases = [data[f"b{i}"].copy() for i in range(n)]
        step = int(data["step_count"])
    state = NetworkState(spec, weights, biases, step_count=step)
    state.first_moment = [np.zeros_like(p) for p in state.params()]
    state.second_moment = [np.zeros_like(p) for p in state.params()]
    return state
