"""CRNN construction, loss, gradient checking and the trainable toy head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import io
from ..sh import Direction, n_channels
from .layers import (
    ELU,
    BatchNorm,
    BiLSTM,
    Conv2D,
    Dense,
    Dropout,
    FreqAveragePool,
    Layer,
    MaxPoolFreq,
    Normalize,
    Reshape,
)

FILTER_CHOICES = (32, 64, 128, 256, 512, 1024)
POOL_SIZES = (8, 8, 4)
DROPOUT = 0.2


@dataclass(frozen=True)
class NNConfig:
    """Network geometry. ``order=None`` selects the 6-channel intensity input."""

    order: int | None = 4
    n_filter: int = 512
    frames: int = 50
    bins: int = 512

    def __post_init__(self):
        if self.order is not None and not 1 <= self.order <= 4:
            raise ValueError(f"order must be in [1, 4] or None, got {self.order}")
        if self.n_filter not in FILTER_CHOICES:
            raise ValueError(f"n_filter must be one of {FILTER_CHOICES}, got {self.n_filter}")

    @property
    def intensity(self) -> bool:
        return self.order is None

    @property
    def dim_in(self) -> int:
        return 6 if self.order is None else 2 * n_channels(self.order)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.frames, self.bins, self.dim_in)

    @property
    def label(self) -> str:
        return "intensity" if self.order is None else f"hoa-{self.order}"


class LayerStack:
    """Ordered layers with a declared input shape (batch axis excluded)."""

    def __init__(self, layers: list[Layer], input_shape: tuple):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        self.shapes()

    def shapes(self) -> list[tuple[str, tuple]]:
        """Declared output shape of every layer; raises on a broken chain."""
        out, shape = [], self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            out.append((layer.name, shape))
        return out

    @property
    def output_shape(self) -> tuple:
        return self.shapes()[-1][1]

    def forward(self, x: np.ndarray, training: bool = False, trace: list | None = None) -> np.ndarray:
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input (batch, {self.input_shape}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, training)
            if trace is not None:
                trace.append((layer.name, x.shape[1:]))
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> dict[str, np.ndarray]:
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.grads.items()}

    def state(self) -> dict[str, np.ndarray]:
        """Parameters plus batch-norm running statistics."""
        out = self.params()
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                out[f"{layer.name}/running_mean"] = layer.running_mean
                out[f"{layer.name}/running_var"] = layer.running_var
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        by_name = {layer.name: layer for layer in self.layers}
        own = self.state()
        if set(state) != set(own):
            raise ValueError(f"state keys differ: {sorted(set(state) ^ set(own))}")
        for key, value in state.items():
            lname, pname = key.rsplit("/", 1)
            if np.shape(value) != own[key].shape:
                raise ValueError(f"{key}: shape {np.shape(value)} != {own[key].shape}")
            value = np.asarray(value, dtype=float)
            layer = by_name[lname]
            if pname in layer.params:
                layer.params[pname] = value.copy()
            else:
                setattr(layer, pname, value.copy())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.state().values())

    def save(self, directory, meta: dict | None = None) -> None:
        io.write_bundle(directory, self.state(), meta)

    def load(self, directory) -> dict:
        state, meta = io.read_bundle(directory)
        self.load_state(state)
        return meta


def build_crnn(cfg: NNConfig, seed: int = 0, pool_sizes=POOL_SIZES) -> LayerStack:
    """Three conv blocks, two bidirectional LSTMs, two time-distributed dense
    layers and a unit-sphere projection."""
    rng = np.random.default_rng(seed)
    nf = cfg.n_filter
    layers: list[Layer] = []
    in_ch = cfg.dim_in
    bins = cfg.bins
    for i, pool in enumerate(pool_sizes, start=1):
        layers += [
            Conv2D(f"conv{i}", in_ch, nf, rng),
            BatchNorm(f"bn{i}", nf),
            ELU(f"elu{i}"),
            MaxPoolFreq(f"pool{i}", pool),
            Dropout(f"drop{i}", DROPOUT, np.random.default_rng(rng.integers(2**63))),
        ]
        in_ch = nf
        bins //= pool
    flat = bins * nf
    layers += [
        Reshape("reshape"),
        BiLSTM("bilstm1", flat, nf, rng),
        BiLSTM("bilstm2", 2 * nf, nf, rng),
        Dense("dense1", 2 * nf, 2 * nf, rng, activation="elu"),
        Dropout("drop4", DROPOUT, np.random.default_rng(rng.integers(2**63))),
        Dense("dense2", 2 * nf, 3, rng),
        Normalize("normalize"),
    ]
    return LayerStack(layers, cfg.input_shape)


def forward(stack: LayerStack, features) -> np.ndarray:
    """Inference on one (frames, bins, channels) tensor; returns (frames, 3)."""
    x = np.asarray(getattr(features, "data", features), dtype=float)
    if x.shape != stack.input_shape:
        raise ValueError(f"expected features {stack.input_shape}, got {x.shape}")
    return stack.forward(x[None], training=False)[0]


def _target_vectors(target) -> np.ndarray:
    if isinstance(target, Direction):
        return target.to_vector()
    if isinstance(target, (list, tuple)) and target and isinstance(target[0], Direction):
        return np.stack([d.to_vector() for d in target])
    return np.asarray(target, dtype=float)


def mse_loss(pred: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Mean squared error over every frame and axis, and its gradient.

    ``pred`` is (frames, 3) or (batch, frames, 3); ``target`` is a Direction,
    a list of them (one per batch item) or the equivalent unit vectors.
    """
    pred = np.asarray(pred, dtype=float)
    t = _target_vectors(target)
    if pred.ndim == 3 and t.ndim == 2:
        t = t[:, None, :]
    diff = pred - t
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def grad_check(layer: Layer, point: np.ndarray, epsilon: float = 1e-5, n_coords: int = 64,
               seed: int = 0, training: bool = True) -> float:
    """Worst relative error between analytic and central-difference gradients.

    The scalar probed is ``sum(r * layer(x))`` for a fixed random ``r``.
    Coordinates are drawn from the input and from every parameter tensor;
    at least ``n_coords`` of each (or all, when fewer exist).
    """
    rng = np.random.default_rng(seed)
    x = np.array(point, dtype=float)
    state = _snapshot(layer)

    def objective():
        _restore(layer, state)
        return float(np.sum(r * layer.forward(x, training)))

    _restore(layer, state)
    r = rng.standard_normal(layer.forward(x, training).shape)
    _restore(layer, state)
    layer.forward(x, training)
    dx = layer.backward(r)
    analytic = {"input": dx, **{k: v.copy() for k, v in layer.grads.items()}}
    targets = {"input": x, **layer.params}

    worst = 0.0
    for name, arr in targets.items():
        flat = arr.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = objective()
            flat[i] = orig - epsilon
            down = objective()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            exact = analytic[name].reshape(-1)[i]
            scale = max(abs(numeric), abs(exact), 1e-6)
            worst = max(worst, abs(numeric - exact) / scale)
    _restore(layer, state)
    return worst


def _snapshot(layer: Layer):
    if isinstance(layer, BatchNorm):
        return (layer.running_mean.copy(), layer.running_var.copy())
    if isinstance(layer, Dropout):
        return layer.rng.bit_generator.state
    return None


def _restore(layer: Layer, state) -> None:
    # forward passes must see identical hidden state for finite differences
    if isinstance(layer, BatchNorm):
        layer.running_mean, layer.running_var = state[0].copy(), state[1].copy()
    elif isinstance(layer, Dropout):
        layer.rng.bit_generator.state = state


class TrainingDivergedError(RuntimeError):
    """The training loss became NaN or infinite."""


@dataclass(frozen=True)
class OptimConfig:
    """Mini-batch Adam: bias-corrected first and second moment estimates."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 32
    hidden: int = 32
    seed: int = 0


def build_toy_head(frames: int, bins: int, channels: int = 6, hidden: int = 32, seed: int = 0) -> LayerStack:
    rng = np.random.default_rng(seed)
    return LayerStack(
        [
            FreqAveragePool("freq_mean"),
            Dense("dense1", channels, hidden, rng, activation="elu"),
            Dense("dense2", hidden, 3, rng),
            Normalize("normalize"),
        ],
        (frames, bins, channels),
    )


@dataclass
class TrainResult:
    head: LayerStack
    loss_trace: list[float] = field(default_factory=list)


def _as_batch(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=float)
    return np.stack([np.asarray(getattr(f, "data", f), dtype=float) for f in features])


def train_toy_head(features, labels, opt: OptimConfig = OptimConfig()) -> TrainResult:
    """Train pooling + dense + dense + normalize on (N, frames, bins, 6)
    features against per-example Direction labels.

    The pooling layer has no parameters, so inputs are pooled once and the
    remaining layers are trained on the pooled tensor.
    """
    x = _as_batch(features)
    if x.ndim != 4 or len(x) != len(labels) or len(x) == 0:
        raise ValueError("need a non-empty (N, frames, bins, channels) batch with one label each")
    targets = _target_vectors(list(labels))
    head = build_toy_head(x.shape[1], x.shape[2], x.shape[3], opt.hidden, opt.seed)
    pooled = head.layers[0].forward(x)
    body = head.layers[1:]
    rng = np.random.default_rng([opt.seed, 1])
    trainable = [l for l in body if l.trainable]
    m = {(id(l), k): np.zeros_like(v) for l in trainable for k, v in l.params.items()}
    v2 = {key: np.zeros_like(val) for key, val in m.items()}
    step = 0
    trace = []
    for epoch in range(opt.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            out = pooled[idx]
            for layer in body:
                out = layer.forward(out, training=True)
            loss, grad = mse_loss(out, targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} in epoch {epoch}")
            total += loss * len(idx)
            for layer in reversed(body):
                grad = layer.backward(grad)
            step += 1
            for layer in trainable:
                for k, g in layer.grads.items():
                    key = (id(layer), k)
                    m[key] = opt.beta1 * m[key] + (1 - opt.beta1) * g
                    v2[key] = opt.beta2 * v2[key] + (1 - opt.beta2) * g * g
                    mhat = m[key] / (1 - opt.beta1**step)
                    vhat = v2[key] / (1 - opt.beta2**step)
                    layer.params[k] = layer.params[k] - opt.learning_rate * mhat / (np.sqrt(vhat) + opt.eps)
        epoch_loss = total / len(x)
        if not np.isfinite(epoch_loss) or not head.all_finite():
            raise TrainingDivergedError(f"training diverged in epoch {epoch}")
        trace.append(epoch_loss)
    return TrainResult(head, trace)


def predict(head: LayerStack, features) -> np.ndarray:
    """Per-frame unit vectors for a batch: (N, frames, 3)."""
    return head.forward(_as_batch(features), training=False)
