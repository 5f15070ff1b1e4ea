"""Small numpy neural-network engine: the layers, losses and optimizer the CNNs need."""

from .layers import (
    AvgPool1D,
    AvgPool2D,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    ReLU,
    Reshape,
    ShapeError,
    Sigmoid,
    Softmax,
    StateError,
    dropout,
    relu,
    sigmoid,
    softmax,
)
from .losses import loss_and_grad, loss_for_task
from .model import Sequential
from .optim import AMSGrad, NonFiniteGradient, amsgrad_step

__all__ = [
    "AMSGrad",
    "AvgPool1D",
    "AvgPool2D",
    "Conv1D",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "NonFiniteGradient",
    "ReLU",
    "Reshape",
    "Sequential",
    "ShapeError",
    "Sigmoid",
    "Softmax",
    "StateError",
    "amsgrad_step",
    "dropout",
    "loss_and_grad",
    "loss_for_task",
    "relu",
    "sigmoid",
    "softmax",
]
