from __future__ import annotations

import numpy as np

from .layers import Layer, ShapeError, StateError, sigmoid, softmax
from .losses import loss_and_grad

HEADS = ("sigmoid", "softmax")


class Sequential:
    """A layer stack ending in logits, plus a sigmoid or softmax head.

    The head is kept outside the layer list because the losses return the
    gradient with respect to the logits directly.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], head: str, loss: str):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.head = head
        self.loss = loss
        self._forward_done = False
        self.output_shape = self.shape_trace()[-1]

    def shape_trace(self) -> list[tuple[int, ...]]:
        """Declared per-sample shape after each layer, input first."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        return shapes

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))

    @property
    def dtype(self):
        return self.params[0].dtype

    def astype(self, dtype) -> "Sequential":
        """Cast parameters and gradient buffers in place."""
        for layer in self.layers:
            layer.params = [p.astype(dtype) for p in layer.params]
            layer.grads = [g.astype(dtype) for g in layer.grads]
            if hasattr(layer, "w"):
                layer.w, layer.b = layer.params
        return self

    def set_params(self, values: list[np.ndarray]) -> None:
        params = self.params
        if len(values) != len(params):
            raise ShapeError(f"expected {len(params)} parameter tensors, got {len(values)}")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise ShapeError(f"parameter shape mismatch: {p.shape} vs {np.shape(v)}")
            p[...] = v

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"model expects input {self.input_shape} per sample, got {tuple(x.shape[1:])}")
        return x.astype(self.dtype, copy=False)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Logits for a batch."""
        h = self._check_input(x)
        for layer in self.layers:
            h = layer.forward(h, training=training)
        self._forward_done = True
        return h

    def apply_head(self, logits: np.ndarray) -> np.ndarray:
        return sigmoid(logits) if self.head == "sigmoid" else softmax(logits)

    def predict_proba(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        x = np.asarray(x)
        out = [
            self.apply_head(self.forward(x[i : i + batch_size]))
            for i in range(0, len(x), batch_size)
        ]
        self._forward_done = False
        if not out:
            return np.empty((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate(out)

    def predict(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def backward(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        """Backpropagate a logits gradient; fills and returns ``self.grads``."""
        if not self._forward_done:
            raise StateError("backward called before forward")
        g = grad_logits.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        self._forward_done = False
        return self.grads

    def loss_and_backward(self, x: np.ndarray, target: np.ndarray, training: bool = True):
        """Forward, loss and backward in one go; returns ``(loss, probs)``."""
        probs = self.apply_head(self.forward(x, training=training))
        loss, grad = loss_and_grad(probs, target, self.loss)
        self.backward(grad)
        return loss, probs

    def summary(self) -> str:
        lines = []
        shapes = self.shape_trace()
        for layer, shape in zip(self.layers, shapes[1:]):
            n = sum(p.size for p in layer.params)
            lines.append(f"{layer!r:<46} {str(shape):<14} {n:>8,}")
        head = "head: " + self.head
        lines.append(f"{head:<46} {str(self.output_shape):<14}")
        lines.append(f"total parameters: {self.param_count():,}")
        return "\n".join(lines)
