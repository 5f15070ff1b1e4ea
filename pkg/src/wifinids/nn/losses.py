"""Cross-entropy losses paired with their output heads.

Both losses take the head's probabilities and return the mean loss over the
batch together with the gradient with respect to the pre-activation logits,
which collapses to ``(p - y) / scale`` for sigmoid/BCE and softmax/CE.
"""

from __future__ import annotations

import numpy as np

EPSILON = 1e-7
LOSS_KINDS = ("binary-crossentropy", "sparse-categorical-crossentropy")


def loss_for_task(task: str) -> str:
    return "binary-crossentropy" if task == "binary" else "sparse-categorical-crossentropy"


def _check_targets(target: np.ndarray, n_classes: int) -> np.ndarray:
    target = np.asarray(target)
    if target.dtype.kind not in "iu":
        raise ValueError("class targets must be integers")
    if target.size and (target.min() < 0 or target.max() >= n_classes):
        bad = target[(target < 0) | (target >= n_classes)][0]
        raise ValueError(f"class id {bad} out of range for {n_classes} classes")
    return target


def binary_crossentropy(probs: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE of independent sigmoid outputs against a one-hot target.

    ``probs`` is ``(N, 2)``; ``target`` is either the integer class ``(N,)``
    or the one-hot ``(N, 2)`` array. The mean runs over samples and outputs.
    """
    probs = np.asarray(probs)
    n, k = probs.shape
    target = np.asarray(target)
    if target.ndim == 1:
        target = np.eye(k, dtype=probs.dtype)[_check_targets(target, k)]
    p = np.clip(probs, EPSILON, 1 - EPSILON)
    loss = -np.mean(target * np.log(p) + (1 - target) * np.log(1 - p))
    grad = (probs - target) / (n * k)
    return float(loss), grad.astype(probs.dtype, copy=False)


def sparse_categorical_crossentropy(probs: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    probs = np.asarray(probs)
    n, k = probs.shape
    target = _check_targets(target, k)
    p = np.clip(probs[np.arange(n), target], EPSILON, 1 - EPSILON)
    loss = -np.mean(np.log(p))
    grad = probs.copy()
    grad[np.arange(n), target] -= 1
    return float(loss), grad / n


def loss_and_grad(probs: np.ndarray, target: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    if kind == "binary-crossentropy":
        return binary_crossentropy(probs, target)
    if kind == "sparse-categorical-crossentropy":
        return sparse_categorical_crossentropy(probs, target)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
