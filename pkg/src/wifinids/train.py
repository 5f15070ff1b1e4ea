"""The four CNN architectures, the training loop and the model container format."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ingest, transform
from .nn import (
    AMSGrad,
    AvgPool1D,
    AvgPool2D,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    ReLU,
    Reshape,
    Sequential,
    ShapeError,
    loss_for_task,
)
from .nn.losses import loss_and_grad

log = logging.getLogger(__name__)

ARCHITECTURES = ("2d-2l", "2d-1l", "1d-2l", "1d-1l")
INPUT_SHAPE = (transform.SIZE, transform.SIZE)
HIDDEN = 32
CONV_DROPOUT = 0.2
DENSE_DROPOUT = 0.5


class TrainingError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


def normalize_arch(arch: str) -> str:
    a = arch.strip().lower()
    if a not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; choose one of: {', '.join(ARCHITECTURES)}")
    return a


def normalize_task(task: str) -> str:
    t = task.strip().lower()
    if t not in ingest.TASKS:
        raise ValueError(f"unknown task {task!r}; choose one of: {', '.join(ingest.TASKS)}")
    return t


def build_layers(arch: str, task: str, rng: np.random.Generator, dtype=np.float32) -> list:
    arch, task = normalize_arch(arch), normalize_task(task)
    two_d = arch.startswith("2d")
    pairs = 2 if arch.endswith("2l") else 1
    n_out = ingest.n_task_classes(task)
    side = transform.SIZE

    if two_d:
        layers = [Reshape((side, side, 1))]
        conv, pool = Conv2D, AvgPool2D
    else:
        layers = [Reshape((side * side, 1))]
        conv, pool = Conv1D, AvgPool1D

    channels = 1
    for _ in range(pairs):
        layers += [conv(channels, rng=rng, dtype=dtype), ReLU(), pool()]
        channels = layers[-3].filters

    # fan-in of the hidden layer follows from the shape trace
    shape = INPUT_SHAPE
    for layer in layers:
        shape = layer.output_shape(shape)
    flat = int(np.prod(shape))
    layers += [
        Dropout(CONV_DROPOUT),
        Flatten(),
        Dense(flat, HIDDEN, rng=rng, dtype=dtype),
        ReLU(),
        Dropout(DENSE_DROPOUT),
        Dense(HIDDEN, n_out, rng=rng, dtype=dtype),
    ]
    return layers


@dataclass
class Classifier:
    """A network together with the metadata needed to use it safely."""

    net: Sequential
    architecture: str
    task: str
    technique: str = "gaf"

    @property
    def n_classes(self) -> int:
        return ingest.n_task_classes(self.task)

    def param_count(self) -> int:
        return self.net.param_count()

    def encode(self, features: np.ndarray) -> np.ndarray:
        return transform.transform_batch(self.technique, features)

    def predict_matrices(self, matrices: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        return self.net.predict(matrices, batch_size)

    def predict(self, features: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Class ids for raw FeatureVectors (transform + forward)."""
        features = np.asarray(features)
        out = [
            self.net.predict(self.encode(features[i : i + batch_size]), batch_size)
            for i in range(0, len(features), batch_size)
        ]
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def metadata(self) -> dict:
        return {
            "architecture": self.architecture,
            "task": self.task,
            "technique": self.technique,
            "input_shape": list(self.net.input_shape),
            "head": self.net.head,
            "loss": self.net.loss,
            "layers": [layer.geometry() for layer in self.net.layers],
            "params": [list(p.shape) for p in self.net.params],
        }


def build_model(arch: str, task: str, seed: int = 0, technique: str = "gaf", dtype=np.float32) -> Classifier:
    """Fresh Glorot-initialised classifier; identical for identical seeds."""
    arch, task = normalize_arch(arch), normalize_task(task)
    transform.get_transform(technique)
    rng = np.random.default_rng(seed)
    layers = build_layers(arch, task, rng, dtype)
    head = "sigmoid" if task == "binary" else "softmax"
    net = Sequential(layers, INPUT_SHAPE, head=head, loss=loss_for_task(task))
    return Classifier(net, arch, task, technique)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    technique: str = "gaf"
    architecture: str = "2d-2l"
    task: str = "binary"
    max_epochs: int = 100
    patience: int = 3
    batch_size: int = 256
    learning_rate: float = 0.001
    seed: int = 0
    cache: bool = True

    def __post_init__(self):
        self.architecture = normalize_arch(self.architecture)
        self.task = normalize_task(self.task)
        transform.get_transform(self.technique)
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainReport:
    history: list[EpochRecord] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    wall_time_s: float = 0.0

    @property
    def best(self) -> EpochRecord:
        return self.history[self.best_epoch - 1]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for r in self.history:
            lines.append(",".join([str(r.epoch)] + [repr(float(v)) for v in (r.train_loss, r.train_acc, r.val_loss, r.val_acc)]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    def summary(self) -> str:
        b = self.best
        return (
            f"epochs run: {self.stop_epoch}, best epoch: {self.best_epoch}\n"
            f"best val_loss {b.val_loss:.6f}, val_acc {100 * b.val_acc:.2f}%\n"
            f"train_loss {b.train_loss:.6f}, train_acc {100 * b.train_acc:.2f}%\n"
            f"wall time: {self.wall_time_s:.1f} s"
        )


class EarlyStopping:
    """Stop once the monitored loss fails to improve ``patience`` times in a row."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; return True when training should stop."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience

    @property
    def improved(self) -> bool:
        return self.stale == 0


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def evaluate_loss(clf: Classifier, matrices: np.ndarray, labels: np.ndarray, batch_size: int = 1024):
    """Mean loss and accuracy in inference mode."""
    total_loss, correct = 0.0, 0
    for sl in _batches(len(labels), batch_size):
        probs = clf.net.apply_head(clf.net.forward(matrices[sl]))
        loss, _ = loss_and_grad(probs, labels[sl], clf.net.loss)
        total_loss += loss * (sl.stop - sl.start)
        correct += int((probs.argmax(axis=1) == labels[sl]).sum())
    n = len(labels)
    return total_loss / n, correct / n


def train(
    clf: Classifier,
    train_split: ingest.DatasetSplit,
    val_split: ingest.DatasetSplit,
    config: TrainConfig,
) -> tuple[Classifier, TrainReport]:
    """Fit ``clf`` with AMSGrad and early stopping on validation loss.

    The returned classifier carries the weights of the best validation
    epoch; ``clf`` itself is trained in place.
    """
    if len(train_split) == 0 or len(val_split) == 0:
        raise TrainingError("training and validation splits must be non-empty")
    if clf.task != config.task or clf.architecture != config.architecture:
        raise TrainingError(
            f"model is {clf.architecture}/{clf.task}, config asks for {config.architecture}/{config.task}"
        )
    clf.technique = config.technique
    net = clf.net
    started = time.perf_counter()

    y_train = ingest.task_labels(train_split.labels, config.task)
    y_val = ingest.task_labels(val_split.labels, config.task)
    x_val = clf.encode(val_split.features).astype(net.dtype)
    x_train = clf.encode(train_split.features).astype(net.dtype) if config.cache else None

    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dropout):
            layer.rng = np.random.default_rng([config.seed, 1, i])

    opt = AMSGrad(net.params, lr=config.learning_rate)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best_params = [p.copy() for p in net.params]
    n = len(y_train)

    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, 0, epoch]).permutation(n)
        loss_sum, correct = 0.0, 0
        for b, sl in enumerate(_batches(n, config.batch_size)):
            idx = order[sl]
            x = x_train[idx] if x_train is not None else clf.encode(train_split.features[idx])
            loss, probs = net.loss_and_backward(x, y_train[idx], training=True)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(net.grads)
            loss_sum += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y_train[idx]).sum())

        val_loss, val_acc = evaluate_loss(clf, x_val, y_val)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc)
        report.history.append(record)
        log.info(
            "epoch %d: loss %.5f acc %.4f val_loss %.5f val_acc %.4f",
            epoch, record.train_loss, record.train_acc, val_loss, val_acc,
        )
        stop = stopper.update(val_loss)
        if stopper.improved:
            best_params = [p.copy() for p in net.params]
        if stop:
            break

    net.set_params(best_params)
    report.stop_epoch = len(report.history)
    report.best_epoch = stopper.best_epoch
    report.wall_time_s = time.perf_counter() - started
    return clf, report


# --------------------------------------------------------------------------
# model container
#
# magic | u16 version | u32 header length | JSON header | float32 LE tensors
# in declaration order | SHA-256 of everything before it

MAGIC = b"WNIDS\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<HI")


def model_bytes(clf: Classifier) -> bytes:
    header = json.dumps(clf.metadata(), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, _PREFIX.pack(FORMAT_VERSION, len(header)), header]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in clf.net.params]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_model(clf: Classifier, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(clf))


def load_model(path: str | os.PathLike) -> Classifier:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + _PREFIX.size + 32 or not data.startswith(MAGIC):
        raise ModelFileError(f"{path}: not a model file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFileError(f"{path}: checksum mismatch")
    version, hlen = _PREFIX.unpack_from(body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version}")
    start = len(MAGIC) + _PREFIX.size
    meta = json.loads(body[start : start + hlen])
    clf = build_model(meta["architecture"], meta["task"], seed=0, technique=meta["technique"])
    expected = clf.metadata()
    for key in ("layers", "params", "input_shape", "head"):
        if meta.get(key) != expected[key]:
            raise ModelFileError(f"{path}: {key} do not match architecture {meta['architecture']}")
    offset = start + hlen
    values = []
    for p in clf.net.params:
        nbytes = p.size * 4
        if offset + nbytes > len(body):
            raise ModelFileError(f"{path}: parameter data truncated")
        values.append(np.frombuffer(body, dtype="<f4", count=p.size, offset=offset).reshape(p.shape))
        offset += nbytes
    if offset != len(body):
        raise ModelFileError(f"{path}: trailing bytes after parameter data")
    clf.net.set_params(values)
    return clf


def clone(clf: Classifier) -> Classifier:
    return copy.deepcopy(clf)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)


__all__ = [
    "ARCHITECTURES",
    "Classifier",
    "EarlyStopping",
    "EpochRecord",
    "ModelFileError",
    "ShapeError",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "build_model",
    "evaluate_loss",
    "load_model",
    "save_model",
    "train",
]
