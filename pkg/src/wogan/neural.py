"""Small dense networks in numpy: forward/backward, RMSProp/Adam, WGAN and
analyzer training.

Networks are trained in place. Weights are stored as (fan_in, fan_out)
matrices so a batch of row vectors is propagated with ``x @ W + b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "tanh", "linear", "sigmoid")
# keep bounded heads strictly inside their open ranges after float saturation
_BELOW_ONE = float(np.nextafter(1.0, 0.0))
_ABOVE_ZERO = float(np.finfo(float).tiny)


class TrainingDivergedError(FloatingPointError):
    pass


def _act(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.clip(np.tanh(z), -_BELOW_ONE, _BELOW_ONE)
    if kind == "sigmoid":
        return np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), _ABOVE_ZERO, _BELOW_ONE)
    return z


def _act_grad(kind, z, a):
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    accumulators: list[list[np.ndarray]]
    step_count: int = 0
    decay: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def make_optimizer(kind: str, params, learning_rate: float, **hyper) -> OptimizerState:
    if kind == "rmsprop":
        acc = [[np.zeros_like(p) for p in params]]
    elif kind == "adam":
        acc = [[np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params]]
    else:
        raise ValueError(f"unknown optimizer {kind!r}")
    return OptimizerState(kind, learning_rate, acc, **hyper)


def optimizer_step(params, grads, state: OptimizerState):
    """Apply one RMSProp or Adam update to ``params`` in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingDivergedError("non-finite gradient")
    state.step_count += 1
    lr, eps = state.learning_rate, state.eps
    if state.kind == "rmsprop":
        (sq,) = state.accumulators
        for p, g, s in zip(params, grads, sq):
            s *= state.decay
            s += (1.0 - state.decay) * g * g
            p -= lr * g / (np.sqrt(s) + eps)
    else:
        m_acc, v_acc = state.accumulators
        b1, b2 = state.beta1, state.beta2
        c1 = 1.0 - b1 ** state.step_count
        c2 = 1.0 - b2 ** state.step_count
        for p, g, m, v in zip(params, grads, m_acc, v_acc):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    optimizer: OptimizerState | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match layer_sizes")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ValueError(f"layer {i} has inconsistent shapes")
        for kind in (self.hidden_activation, self.output_activation):
            if kind not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> DenseNet:
        opt = None
        if self.optimizer is not None:
            o = self.optimizer
            opt = OptimizerState(o.kind, o.learning_rate, [[a.copy() for a in acc] for acc in o.accumulators],
                                 o.step_count, o.decay, o.beta1, o.beta2, o.eps)
        return DenseNet(list(self.layer_sizes), [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.hidden_activation, self.output_activation, opt)

    def same_as(self, other: DenseNet) -> bool:
        """Bit-exact equality of architecture and parameters."""
        return (self.layer_sizes == other.layer_sizes
                and self.hidden_activation == other.hidden_activation
                and self.output_activation == other.output_activation
                and all(np.array_equal(a, b) for a, b in zip(self.params, other.params)))


def init_net(layer_sizes, rng: np.random.Generator, output_activation="linear",
             hidden_activation="relu") -> DenseNet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(list(layer_sizes), weights, biases, hidden_activation, output_activation)


def _check_input(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"expected batch of width {net.input_dim}, got shape {x.shape}")
    return x


def _forward_cache(net: DenseNet, x: np.ndarray):
    acts, pre = [x], []
    n = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ W + b
        kind = net.output_activation if i == n - 1 else net.hidden_activation
        pre.append(z)
        acts.append(_act(kind, z))
    return acts, pre


def forward(net: DenseNet, batch) -> np.ndarray:
    x = _check_input(net, batch)
    return _forward_cache(net, x)[0][-1]


def backward(net: DenseNet, batch, upstream):
    """Gradients of ``sum(upstream * forward(net, batch))``.

    Returns ``(param_grads, input_grads)`` with ``param_grads`` ordered like
    ``net.params``.
    """
    _, grads, dx = _value_and_grads(net, _check_input(net, batch), upstream)
    return grads, dx


def _value_and_grads(net: DenseNet, x: np.ndarray, upstream):
    acts, pre = _forward_cache(net, x)
    g = np.asarray(upstream, dtype=float)
    if g.shape != acts[-1].shape:
        raise ValueError(f"upstream shape {g.shape} does not match output shape {acts[-1].shape}")
    n = len(net.weights)
    grads = [None] * (2 * n)
    for i in reversed(range(n)):
        kind = net.output_activation if i == n - 1 else net.hidden_activation
        g = g * _act_grad(kind, pre[i], acts[i + 1])
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return acts[-1], grads, g


def clip_weights(net: DenseNet, c: float) -> DenseNet:
    if c <= 0:
        raise ValueError("clip constant must be positive")
    for p in net.params:
        np.clip(p, -c, c, out=p)
    return net


def _ensure_optimizer(net: DenseNet, kind: str, lr: float) -> OptimizerState:
    if net.optimizer is None:
        net.optimizer = make_optimizer(kind, net.params, lr)
    return net.optimizer


# ---------------------------------------------------------------------------
# training rounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GanTrainConfig:
    clip_constant: float = 0.01
    n_critic: int = 5
    batch_size: int = 32
    rounds: int = 30
    noise_dim: int = 10
    learning_rate: float = 5e-5

    def __post_init__(self):
        if self.clip_constant <= 0:
            raise ValueError("clip_constant must be positive")
        if self.n_critic < 1:
            raise ValueError("n_critic must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")


@dataclass(frozen=True)
class AnalyzerTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def make_generator(rng, noise_dim=10, out_dim=10, hidden=(64, 64)) -> DenseNet:
    return init_net([noise_dim, *hidden, out_dim], rng, output_activation="tanh")


def make_critic(rng, in_dim=10, hidden=(64, 64)) -> DenseNet:
    return init_net([in_dim, *hidden, 1], rng, output_activation="linear")


def make_analyzer(rng, in_dim=10, hidden=(64, 64)) -> DenseNet:
    return init_net([in_dim, *hidden, 1], rng, output_activation="sigmoid")


def sample_generator(G: DenseNet, n: int, noise_source: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    z = noise_source.standard_normal((n, G.input_dim))
    return forward(G, z)


def wgan_round(G: DenseNet, C: DenseNet, real_data, cfg: GanTrainConfig,
               noise_source: np.random.Generator) -> list[float]:
    """Weight-clipped WGAN training for ``cfg.rounds`` generator steps.

    Each round runs ``n_critic`` critic updates followed by one generator
    update. Returns the critic loss ``mean C(fake) - mean C(real)`` of every
    critic update.
    """
    real = np.asarray(real_data, dtype=float)
    if real.ndim != 2 or len(real) == 0:
        raise ValueError("real_data must be a non-empty 2-D batch")
    if real.shape[1] != G.output_dim or C.input_dim != G.output_dim:
        raise ValueError("generator output, critic input and data width must agree")
    g_opt = _ensure_optimizer(G, "rmsprop", cfg.learning_rate)
    c_opt = _ensure_optimizer(C, "rmsprop", cfg.learning_rate)
    B = cfg.batch_size
    losses = []
    for _ in range(cfg.rounds):
        for _ in range(cfg.n_critic):
            xr = real[noise_source.integers(0, len(real), size=B)]
            xf = forward(G, noise_source.standard_normal((B, G.input_dim)))
            cr, gr, _ = _value_and_grads(C, xr, np.full((B, 1), -1.0 / B))
            cf, gf, _ = _value_and_grads(C, xf, np.full((B, 1), 1.0 / B))
            losses.append(float(cf.mean() - cr.mean()))
            optimizer_step(C.params, [a + b for a, b in zip(gr, gf)], c_opt)
            clip_weights(C, cfg.clip_constant)
        z = noise_source.standard_normal((B, G.input_dim))
        xf = forward(G, z)
        _, dx = backward(C, xf, np.full((B, 1), -1.0 / B))
        gg, _ = backward(G, z, dx)
        optimizer_step(G.params, gg, g_opt)
    return losses


def analyzer_round(A: DenseNet, tests, fitnesses, cfg: AnalyzerTrainConfig,
                   rng: np.random.Generator) -> list[float]:
    """Minibatch MSE regression; returns the mean minibatch loss of each epoch.

    With zero epochs the network is untouched and a single full-data MSE is
    returned.
    """
    x = np.asarray(tests, dtype=float)
    y = np.asarray(fitnesses, dtype=float).reshape(-1, 1)
    if len(x) == 0:
        raise ValueError("no training data")
    if len(x) != len(y):
        raise ValueError("tests and fitnesses differ in length")
    if cfg.epochs == 0:
        return [float(np.mean((forward(A, x) - y) ** 2))]
    opt = _ensure_optimizer(A, "adam", cfg.learning_rate)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            err = forward(A, xb) - yb
            total += float(np.sum(err ** 2))
            grads, _ = backward(A, xb, 2.0 * err / len(idx))
            optimizer_step(A.params, grads, opt)
        trace.append(total / len(x))
    return trace


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def net_to_dict(net: DenseNet) -> dict:
    d = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "optimizer": None,
    }
    if net.optimizer is not None:
        o = net.optimizer
        d["optimizer"] = {
            "kind": o.kind, "learning_rate": o.learning_rate, "step_count": o.step_count,
            "decay": o.decay, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps,
            "accumulators": [[a.tolist() for a in acc] for acc in o.accumulators],
        }
    return d


def net_from_dict(d: dict) -> DenseNet:
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
    net = DenseNet(
        list(d["layer_sizes"]),
        [np.array(W, dtype=float).reshape(a, b) for W, a, b in zip(d["weights"], d["layer_sizes"][:-1], d["layer_sizes"][1:])],
        [np.array(b, dtype=float) for b in d["biases"]],
        d["hidden_activation"], d["output_activation"],
    )
    o = d.get("optimizer")
    if o is not None:
        shapes = [p.shape for p in net.params]
        acc = [[np.array(a, dtype=float).reshape(s) for a, s in zip(group, shapes)] for group in o["accumulators"]]
        net.optimizer = OptimizerState(o["kind"], o["learning_rate"], acc, o["step_count"],
                                       o["decay"], o["beta1"], o["beta2"], o["eps"])
    return net


def save_checkpoint(net: DenseNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh)


def load_checkpoint(path) -> DenseNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
