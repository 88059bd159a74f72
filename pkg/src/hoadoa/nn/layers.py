"""Numpy layers with explicit backward passes.

Tensors carry a leading batch axis. Shapes passed to ``output_shape`` omit
it. Image-like tensors are (batch, frames, bins, channels).
"""
from __future__ import annotations

import numpy as np


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, shape)


class Layer:
    trainable = False

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    """3x3 convolution, stride 1, zero 'same' padding."""

    trainable = True

    def __init__(self, name, in_channels: int, filters: int, rng, kernel: int = 3):
        super().__init__(name)
        self.in_channels, self.filters, self.k = in_channels, filters, kernel
        fan_in = kernel * kernel * in_channels
        self.params["kernel"] = _uniform(rng, (kernel, kernel, in_channels, filters), fan_in)
        self.params["bias"] = _uniform(rng, (filters,), fan_in)

    def output_shape(self, shape):
        t, f, c = shape
        if c != self.in_channels:
            raise ValueError(f"{self.name}: expected {self.in_channels} channels, got {c}")
        return (t, f, self.filters)

    def forward(self, x, training=False):
        b, t, f, c = x.shape
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        self._xp = xp
        w = self.params["kernel"]
        out = np.broadcast_to(self.params["bias"], (b, t, f, self.filters)).copy()
        for i in range(self.k):
            for j in range(self.k):
                out += xp[:, i : i + t, j : j + f, :] @ w[i, j]
        return out

    def backward(self, grad):
        xp = self._xp
        b, t, f, _ = grad.shape
        w = self.params["kernel"]
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w)
        g2 = grad.reshape(-1, self.filters)
        for i in range(self.k):
            for j in range(self.k):
                patch = xp[:, i : i + t, j : j + f, :]
                dw[i, j] = patch.reshape(-1, self.in_channels).T @ g2
                dxp[:, i : i + t, j : j + f, :] += grad @ w[i, j].T
        self.grads = {"kernel": dw, "bias": g2.sum(axis=0)}
        p = self.k // 2
        return dxp[:, p : p + t, p : p + f, :]


class BatchNorm(Layer):
    """Per-channel batch normalization over all non-channel axes.

    Training mode normalizes with batch statistics and updates the running
    estimates with momentum 0.99; inference uses the running estimates.
    """

    trainable = True

    def __init__(self, name, channels: int, momentum: float = 0.99, eps: float = 1e-3):
        super().__init__(name)
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad):
        xhat, inv, training = self._cache
        axes = tuple(range(grad.ndim - 1))
        self.grads = {"gamma": (grad * xhat).sum(axis=axes), "beta": grad.sum(axis=axes)}
        g = grad * self.params["gamma"]
        if not training:
            return g * inv
        m = grad.size // grad.shape[-1]
        return inv / m * (m * g - g.sum(axis=axes) - xhat * (g * xhat).sum(axis=axes))


class ELU(Layer):
    def forward(self, x, training=False):
        self._x = x
        return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))

    def backward(self, grad):
        x = self._x
        return grad * np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


class MaxPoolFreq(Layer):
    """Max pooling of size (1, k): frames untouched, bins reduced by k."""

    def __init__(self, name, size: int):
        super().__init__(name)
        self.size = size

    def output_shape(self, shape):
        t, f, c = shape
        if f % self.size:
            raise ValueError(f"{self.name}: {f} bins not divisible by {self.size}")
        return (t, f // self.size, c)

    def forward(self, x, training=False):
        b, t, f, c = x.shape
        if f % self.size:
            raise ValueError(f"{self.name}: {f} bins not divisible by {self.size}")
        blocks = x.reshape(b, t, f // self.size, self.size, c)
        self._arg = blocks.argmax(axis=3)
        self._shape = x.shape
        return blocks.max(axis=3)

    def backward(self, grad):
        b, t, f, c = self._shape
        out = np.zeros((b, t, f // self.size, self.size, c))
        np.put_along_axis(out, self._arg[:, :, :, None, :], grad[:, :, :, None, :], axis=3)
        return out.reshape(self._shape)


class Dropout(Layer):
    def __init__(self, name, rate: float, rng=None):
        super().__init__(name)
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Reshape(Layer):
    """(frames, bins, channels) -> (frames, bins * channels), row-major."""

    def output_shape(self, shape):
        t, f, c = shape
        return (t, f * c)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class BiLSTM(Layer):
    """Bidirectional LSTM, ``units`` per direction, outputs concatenated.

    Gate order in the weight columns is input, forget, cell, output. Forward
    pass only.
    """

    def __init__(self, name, in_features: int, units: int, rng):
        super().__init__(name)
        self.in_features, self.units = in_features, units
        for d in ("fwd", "bwd"):
            self.params[f"{d}_kernel"] = _uniform(rng, (in_features, 4 * units), in_features)
            self.params[f"{d}_recurrent"] = _uniform(rng, (units, 4 * units), units)
            self.params[f"{d}_bias"] = _uniform(rng, (4 * units,), in_features)

    def output_shape(self, shape):
        t, f = shape
        if f != self.in_features:
            raise ValueError(f"{self.name}: expected {self.in_features} features, got {f}")
        return (t, 2 * self.units)

    def _run(self, x, d):
        b, t, _ = x.shape
        u = self.units
        pre = x @ self.params[f"{d}_kernel"] + self.params[f"{d}_bias"]
        rec = self.params[f"{d}_recurrent"]
        h = np.zeros((b, u))
        c = np.zeros((b, u))
        out = np.empty((b, t, u))
        for step in range(t):
            z = pre[:, step] + h @ rec
            i = _sigmoid(z[:, :u])
            f = _sigmoid(z[:, u : 2 * u])
            g = np.tanh(z[:, 2 * u : 3 * u])
            o = _sigmoid(z[:, 3 * u :])
            c = f * c + i * g
            h = o * np.tanh(c)
            out[:, step] = h
        return out

    def forward(self, x, training=False):
        fwd = self._run(x, "fwd")
        bwd = self._run(x[:, ::-1], "bwd")[:, ::-1]
        return np.concatenate([fwd, bwd], axis=-1)


class Dense(Layer):
    """Affine map over the last axis (time-distributed for 3-D input),
    optionally followed by an elu."""

    trainable = True

    def __init__(self, name, in_features: int, out_features: int, rng, activation: str = "linear"):
        super().__init__(name)
        if activation not in ("linear", "elu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_features, self.out_features = in_features, out_features
        self.activation = activation
        self._elu = ELU(name + "/elu") if activation == "elu" else None
        self.params["kernel"] = _uniform(rng, (in_features, out_features), in_features)
        self.params["bias"] = _uniform(rng, (out_features,), in_features)

    def output_shape(self, shape):
        if shape[-1] != self.in_features:
            raise ValueError(f"{self.name}: expected {self.in_features} features, got {shape[-1]}")
        return shape[:-1] + (self.out_features,)

    def forward(self, x, training=False):
        self._x = x
        z = x @ self.params["kernel"] + self.params["bias"]
        return z if self._elu is None else self._elu.forward(z)

    def backward(self, grad):
        if self._elu is not None:
            grad = self._elu.backward(grad)
        x2 = self._x.reshape(-1, self.in_features)
        g2 = grad.reshape(-1, self.out_features)
        self.grads = {"kernel": x2.T @ g2, "bias": g2.sum(axis=0)}
        return grad @ self.params["kernel"].T


ZERO_DIRECTION = np.array([0.0, 0.0, 1.0])


def unit_rows(x: np.ndarray) -> np.ndarray:
    """Scale last-axis vectors to unit length; zero vectors become +z."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    out = np.divide(x, norm, out=np.zeros_like(x), where=norm > 0.0)
    zero = norm[..., 0] == 0.0
    if zero.any():
        out[zero] = ZERO_DIRECTION
    return out


class Normalize(Layer):
    """Projects each output vector onto the unit sphere."""

    def forward(self, x, training=False):
        self._norm = np.linalg.norm(x, axis=-1, keepdims=True)
        self._y = unit_rows(x)
        return self._y

    def backward(self, grad):
        y, norm = self._y, self._norm
        g = (grad - y * (grad * y).sum(axis=-1, keepdims=True)) / np.where(norm > 0.0, norm, np.inf)
        return g


class FreqAveragePool(Layer):
    """Mean over the bins axis: (frames, bins, channels) -> (frames, channels)."""

    def output_shape(self, shape):
        t, f, c = shape
        return (t, c)

    def forward(self, x, training=False):
        self._bins = x.shape[2]
        return x.mean(axis=2)

    def backward(self, grad):
        return np.repeat(grad[:, :, None, :] / self._bins, self._bins, axis=2)
