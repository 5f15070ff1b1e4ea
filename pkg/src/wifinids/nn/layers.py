"""Layers with explicit forward/backward passes.

Tensors are numpy arrays in channels-last layout with a leading batch axis:
``(N, H, W, C)`` for 2D feature maps and ``(N, L, C)`` for 1D ones.
Each layer caches what its backward pass needs during ``forward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3
POOL = 2
FILTERS = 16


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    params: list[np.ndarray]
    grads: list[np.ndarray]

    def __init__(self):
        self.params = []
        self.grads = []
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def geometry(self) -> dict:
        return {"kind": type(self).__name__.lower()}

    def _pop_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a recorded forward pass")
        cache, self._cache = self._cache, None
        return cache

    def __repr__(self):
        extra = ", ".join(f"{k}={v}" for k, v in self.geometry().items() if k != "kind")
        return f"{type(self).__name__}({extra})"


class Conv2D(Layer):
    """3x3, stride 1, zero "same" padding."""

    def __init__(self, in_channels: int, filters: int = FILTERS, rng=None, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.filters = filters
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = KERNEL * KERNEL * in_channels
        fan_out = KERNEL * KERNEL * filters
        self.w = glorot_uniform(rng, (KERNEL, KERNEL, in_channels, filters), fan_in, fan_out, dtype)
        self.b = np.zeros(filters, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def geometry(self):
        return {"kind": "conv2d", "in_channels": self.in_channels, "filters": self.filters, "kernel": KERNEL}

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.in_channels:
            raise ShapeError(f"conv2d expects {self.in_channels} input channels, got {c}")
        return (h, w, self.filters)

    def forward(self, x, training=False):
        w, b = self.params
        if x.ndim != 4:
            raise ShapeError(f"conv2d expects (N, H, W, C) input, got rank {x.ndim}")
        if x.shape[3] != w.shape[2]:
            raise ShapeError(f"conv2d channel dimension: expected {w.shape[2]}, got {x.shape[3]}")
        n, h, wd, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        # (N, H, W, C, kh, kw) -> (N, H, W, kh, kw, C)
        cols = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = cols.reshape(n * h * wd, KERNEL * KERNEL * c)
        out = cols @ w.reshape(-1, w.shape[3]) + b
        self._cache = (cols, x.shape)
        return out.reshape(n, h, wd, w.shape[3])

    def backward(self, grad):
        cols, (n, h, wd, c) = self._pop_cache()
        w = self.params[0]
        g2 = grad.reshape(-1, w.shape[3])
        self.grads[0][...] = (cols.T @ g2).reshape(w.shape)
        self.grads[1][...] = g2.sum(axis=0)
        dcols = (g2 @ w.reshape(-1, w.shape[3]).T).reshape(n, h, wd, KERNEL, KERNEL, c)
        dxp = np.zeros((n, h + 2, wd + 2, c), dtype=grad.dtype)
        for di in range(KERNEL):
            for dj in range(KERNEL):
                dxp[:, di : di + h, dj : dj + wd, :] += dcols[:, :, :, di, dj, :]
        return dxp[:, 1:-1, 1:-1, :]


class Conv1D(Layer):
    """Length-3, stride 1, zero "same" padding."""

    def __init__(self, in_channels: int, filters: int = FILTERS, rng=None, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.filters = filters
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = glorot_uniform(rng, (KERNEL, in_channels, filters), KERNEL * in_channels, KERNEL * filters, dtype)
        self.b = np.zeros(filters, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def geometry(self):
        return {"kind": "conv1d", "in_channels": self.in_channels, "filters": self.filters, "kernel": KERNEL}

    def output_shape(self, input_shape):
        length, c = input_shape
        if c != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} input channels, got {c}")
        return (length, self.filters)

    def forward(self, x, training=False):
        w, b = self.params
        if x.ndim != 3:
            raise ShapeError(f"conv1d expects (N, L, C) input, got rank {x.ndim}")
        if x.shape[2] != w.shape[1]:
            raise ShapeError(f"conv1d channel dimension: expected {w.shape[1]}, got {x.shape[2]}")
        n, length, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
        cols = sliding_window_view(xp, KERNEL, axis=1).transpose(0, 1, 3, 2)
        cols = cols.reshape(n * length, KERNEL * c)
        out = cols @ w.reshape(-1, w.shape[2]) + b
        self._cache = (cols, x.shape)
        return out.reshape(n, length, w.shape[2])

    def backward(self, grad):
        cols, (n, length, c) = self._pop_cache()
        w = self.params[0]
        g2 = grad.reshape(-1, w.shape[2])
        self.grads[0][...] = (cols.T @ g2).reshape(w.shape)
        self.grads[1][...] = g2.sum(axis=0)
        dcols = (g2 @ w.reshape(-1, w.shape[2]).T).reshape(n, length, KERNEL, c)
        dxp = np.zeros((n, length + 2, c), dtype=grad.dtype)
        for d in range(KERNEL):
            dxp[:, d : d + length, :] += dcols[:, :, d, :]
        return dxp[:, 1:-1, :]


class AvgPool2D(Layer):
    """2x2 windows, stride 2; a trailing odd row/column is dropped."""

    def geometry(self):
        return {"kind": "avgpool2d", "pool": POOL}

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < POOL or w < POOL:
            raise ShapeError(f"avgpool2d needs spatial dims >= {POOL}, got {h}x{w}")
        return (h // POOL, w // POOL, c)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        oh, ow, _ = self.output_shape((h, w, c))
        crop = x[:, : oh * POOL, : ow * POOL, :]
        self._cache = x.shape
        return crop.reshape(n, oh, POOL, ow, POOL, c).mean(axis=(2, 4))

    def backward(self, grad):
        n, h, w, c = self._pop_cache()
        oh, ow = grad.shape[1:3]
        dx = np.zeros((n, h, w, c), dtype=grad.dtype)
        spread = np.repeat(np.repeat(grad, POOL, axis=1), POOL, axis=2) / (POOL * POOL)
        dx[:, : oh * POOL, : ow * POOL, :] = spread
        return dx


class AvgPool1D(Layer):
    """Windows of 2, stride 2; a trailing odd element is dropped."""

    def geometry(self):
        return {"kind": "avgpool1d", "pool": POOL}

    def output_shape(self, input_shape):
        length, c = input_shape
        if length < POOL:
            raise ShapeError(f"avgpool1d needs length >= {POOL}, got {length}")
        return (length // POOL, c)

    def forward(self, x, training=False):
        n, length, c = x.shape
        ol, _ = self.output_shape((length, c))
        self._cache = x.shape
        return x[:, : ol * POOL, :].reshape(n, ol, POOL, c).mean(axis=2)

    def backward(self, grad):
        n, length, c = self._pop_cache()
        ol = grad.shape[1]
        dx = np.zeros((n, length, c), dtype=grad.dtype)
        dx[:, : ol * POOL, :] = np.repeat(grad, POOL, axis=1) / POOL
        return dx


class Reshape(Layer):
    """Reshape the per-sample part of the tensor; ``Flatten`` is the rank-1 case."""

    def __init__(self, target: tuple[int, ...]):
        super().__init__()
        self.target = tuple(target)

    def geometry(self):
        return {"kind": "reshape", "target": list(self.target)}

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.target)):
            raise ShapeError(f"cannot reshape {input_shape} to {self.target}")
        return self.target

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.output_shape(x.shape[1:]))

    def backward(self, grad):
        return grad.reshape(self._pop_cache())


class Flatten(Reshape):
    def __init__(self):
        super().__init__(())

    def geometry(self):
        return {"kind": "flatten"}

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float32):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def geometry(self):
        return {"kind": "dense", "in": self.n_in, "out": self.n_out}

    def output_shape(self, input_shape):
        if input_shape != (self.n_in,):
            raise ShapeError(f"dense expects input ({self.n_in},), got {input_shape}")
        return (self.n_out,)

    def forward(self, x, training=False):
        w, b = self.params
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"dense input dimension: expected {w.shape[0]}, got {x.shape[1:]}")
        self._cache = x
        return x @ w + b

    def backward(self, grad):
        x = self._pop_cache()
        self.grads[0][...] = x.T @ grad
        self.grads[1][...] = grad.sum(axis=0)
        return grad @ self.params[0].T


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` while training."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def geometry(self):
        return {"kind": "dropout", "rate": self.rate}

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._cache = None if not training else np.ones((), dtype=x.dtype)
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        if self._cache is None:
            # inference-mode dropout is the identity
            return grad
        return grad * self._pop_cache()


class ReLU(Layer):
    def geometry(self):
        return {"kind": "relu"}

    def forward(self, x, training=False):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return grad * self._pop_cache()


class Sigmoid(Layer):
    def geometry(self):
        return {"kind": "sigmoid"}

    def forward(self, x, training=False):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._pop_cache()
        return grad * y * (1 - y)


class Softmax(Layer):
    def geometry(self):
        return {"kind": "softmax"}

    def forward(self, x, training=False):
        y = softmax(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._pop_cache()
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(np.result_type(x, np.float32), copy=False)


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def dropout(x: np.ndarray, rate: float, training: bool, seed: int | None = None) -> np.ndarray:
    """Functional inverted dropout (``training=False`` is the identity)."""
    layer = Dropout(rate, np.random.default_rng(seed))
    return layer.forward(np.asarray(x), training=training)
