"""Metrics, confusion matrices, latency benchmarks, comparison tables and synthetic data."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import ingest
from .train import Classifier

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


# Published results on AWID3 (percent): train acc, test acc, precision, recall, F1.
PUBLISHED_BINARY = {
    ("cyclic", "1d-2l"): (99.74, 99.80, 99.55, 98.95, 99.25),
    ("cyclic", "1d-1l"): (99.62, 99.59, 97.11, 99.89, 98.48),
    ("cyclic", "2d-2l"): (99.75, 99.80, 99.39, 99.12, 99.25),
    ("cyclic", "2d-1l"): (99.57, 99.63, 99.09, 98.15, 98.62),
    ("circulant", "1d-2l"): (99.71, 99.73, 98.96, 99.00, 98.98),
    ("circulant", "1d-1l"): (99.54, 99.55, 97.21, 99.47, 98.33),
    ("circulant", "2d-2l"): (99.76, 99.80, 99.62, 98.87, 99.25),
    ("circulant", "2d-1l"): (99.60, 99.59, 97.24, 99.75, 98.48),
    ("grayscale-circulant", "1d-2l"): (99.76, 99.82, 99.21, 99.41, 99.31),
    ("grayscale-circulant", "1d-1l"): (99.51, 99.60, 97.17, 99.90, 98.51),
    ("grayscale-circulant", "2d-2l"): (99.72, 99.80, 99.60, 98.93, 99.27),
    ("grayscale-circulant", "2d-1l"): (99.56, 99.60, 97.21, 99.89, 98.53),
    ("correlation", "1d-2l"): (99.53, 99.67, 98.05, 99.53, 98.79),
    ("correlation", "1d-1l"): (98.88, 99.26, 96.03, 98.54, 97.27),
    ("correlation", "2d-2l"): (99.59, 99.57, 99.57, 97.23, 98.38),
    ("correlation", "2d-1l"): (98.98, 99.23, 95.41, 99.00, 97.17),
    ("gaf", "1d-2l"): (99.90, 99.92, 99.70, 99.67, 99.69),
    ("gaf", "1d-1l"): (99.67, 99.83, 98.95, 99.81, 99.39),
    ("gaf", "2d-2l"): (99.86, 99.93, 99.90, 99.56, 99.73),
    ("gaf", "2d-1l"): (99.50, 99.58, 97.18, 99.77, 98.46),
}
PUBLISHED_MULTICLASS = {
    ("cyclic", "1d-2l"): (99.14, 99.49, 99.50, 99.49, 99.49),
    ("cyclic", "1d-1l"): (97.16, 98.30, 98.44, 98.30, 98.02),
    ("cyclic", "2d-2l"): (98.99, 99.33, 99.33, 99.33, 99.31),
    ("cyclic", "2d-1l"): (97.72, 97.92, 98.10, 97.92, 97.58),
    ("circulant", "1d-2l"): (99.24, 99.48, 99.48, 99.48, 99.47),
    ("circulant", "1d-1l"): (97.89, 98.76, 98.88, 98.76, 98.69),
    ("circulant", "2d-2l"): (99.12, 99.41, 99.24, 99.41, 99.40),
    ("circulant", "2d-1l"): (98.33, 99.10, 99.15, 99.10, 99.07),
    ("grayscale-circulant", "1d-2l"): (98.50, 99.31, 99.32, 99.31, 99.30),
    ("grayscale-circulant", "1d-1l"): (97.62, 99.17, 99.16, 99.17, 99.13),
    ("grayscale-circulant", "2d-2l"): (99.08, 99.40, 99.41, 99.40, 99.39),
    ("grayscale-circulant", "2d-1l"): (98.05, 99.00, 99.12, 99.00, 99.00),
    ("correlation", "1d-2l"): (98.47, 99.11, 99.19, 99.11, 99.12),
    ("correlation", "1d-1l"): (96.87, 99.26, 97.99, 97.69, 97.45),
    ("correlation", "2d-2l"): (98.97, 99.34, 99.35, 99.34, 99.33),
    ("correlation", "2d-1l"): (96.70, 97.60, 97.78, 97.60, 97.24),
    ("gaf", "1d-2l"): (99.36, 99.62, 99.62, 99.62, 99.62),
    ("gaf", "1d-1l"): (97.81, 99.05, 99.13, 99.05, 99.03),
    ("gaf", "2d-2l"): (99.28, 99.50, 99.51, 99.50, 99.48),
    ("gaf", "2d-1l"): (98.41, 99.32, 99.30, 99.32, 99.27),
}
PUBLISHED_TABLES = {"binary": PUBLISHED_BINARY, "multiclass": PUBLISHED_MULTICLASS}
PUBLISHED_TEST_RECORDS = 1_046_692
PUBLISHED_LATENCY_US = {"2d-2l": 48.0, "1d-2l": 40.0}


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    total = precision + recall
    return 2.0 * precision * recall / total if total > 0 else 0.0


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise EvaluationError("true and predicted labels differ in length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise EvaluationError(f"class id out of range for {n_classes} classes")
    flat = y_true * n_classes + y_pred
    return np.bincount(flat, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


def _one_vs_rest(cm: np.ndarray, k: int, degenerate: list[str], name: str) -> ClassMetrics:
    tp = cm[k, k]
    predicted = cm[:, k].sum()
    actual = cm[k, :].sum()
    if predicted == 0:
        degenerate.append(f"precision[{name}]: no predicted positives")
        precision = 0.0
    else:
        precision = 100.0 * tp / predicted
    if actual == 0:
        degenerate.append(f"recall[{name}]: no actual positives")
        recall = 0.0
    else:
        recall = 100.0 * tp / actual
    return ClassMetrics(precision, recall, f1_score(precision, recall), int(actual))


@dataclass
class MetricsReport:
    """Evaluation outcome; every rate is a percentage."""

    task: str
    confusion: np.ndarray
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: list[ClassMetrics] = field(default_factory=list)
    macro: ClassMetrics | None = None
    weighted: ClassMetrics | None = None
    degenerate: list[str] = field(default_factory=list)
    technique: str = ""
    architecture: str = ""
    total_time_s: float = 0.0
    train_accuracy: float | None = None

    @property
    def n_records(self) -> int:
        return int(self.confusion.sum())

    @property
    def per_record_us(self) -> float:
        return 1e6 * self.total_time_s / self.n_records if self.n_records else 0.0

    def rows(self) -> list[tuple[str, str]]:
        out = [
            ("task", self.task),
            ("technique", self.technique),
            ("architecture", self.architecture),
            ("records", str(self.n_records)),
            ("accuracy", f"{self.accuracy:.4f}"),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("f1", f"{self.f1:.4f}"),
        ]
        if self.macro is not None:
            out += [
                ("macro_precision", f"{self.macro.precision:.4f}"),
                ("macro_recall", f"{self.macro.recall:.4f}"),
                ("macro_f1", f"{self.macro.f1:.4f}"),
            ]
        if self.train_accuracy is not None:
            out.append(("train_accuracy", f"{self.train_accuracy:.4f}"))
        out += [
            ("total_time_s", f"{self.total_time_s:.6f}"),
            ("per_record_us", f"{self.per_record_us:.3f}"),
            ("degenerate", "; ".join(self.degenerate)),
        ]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(self.rows())
        return buf.getvalue()

    def confusion_csv(self) -> str:
        names = class_names(self.task)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, self.confusion):
            w.writerow([name, *row.tolist()])
        return buf.getvalue()

    def summary(self) -> str:
        head = f"{self.technique or '?'} / {self.architecture or '?'} ({self.task}), {self.n_records} records"
        lines = [
            head,
            f"  accuracy  {self.accuracy:7.3f}%",
            f"  precision {self.precision:7.3f}%",
            f"  recall    {self.recall:7.3f}%",
            f"  F1-score  {self.f1:7.3f}%",
        ]
        if self.task == "multiclass":
            lines.insert(1, "  (precision/recall/F1 are support-weighted)")
            lines.append(f"  macro F1  {self.macro.f1:7.3f}%")
        if self.total_time_s:
            lines.append(f"  prediction time {1e3 * self.total_time_s:.1f} ms ({self.per_record_us:.2f} us/record)")
        for d in self.degenerate:
            lines.append(f"  degenerate: {d}")
        return "\n".join(lines)


def class_names(task: str) -> list[str]:
    return ["Normal", "Attack"] if task == "binary" else list(ingest.CLASS_NAMES)


def metrics_from_confusion(cm: np.ndarray, task: str) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise EvaluationError("cannot compute metrics on an empty split")
    accuracy = 100.0 * np.trace(cm) / total
    degenerate: list[str] = []
    names = class_names(task)
    if task == "binary":
        attack = _one_vs_rest(cm, 1, degenerate, "Attack")
        return MetricsReport(task, cm, accuracy, attack.precision, attack.recall, attack.f1, degenerate=degenerate)

    per_class = [_one_vs_rest(cm, k, degenerate, names[k]) for k in range(len(cm))]
    support = np.array([c.support for c in per_class], dtype=np.float64)
    weights = support / support.sum()
    stack = np.array([[c.precision, c.recall, c.f1] for c in per_class])
    macro = ClassMetrics(*stack.mean(axis=0), int(total))
    weighted = ClassMetrics(*(weights @ stack), int(total))
    return MetricsReport(
        task, cm, accuracy,
        weighted.precision, weighted.recall, weighted.f1,
        per_class=per_class, macro=macro, weighted=weighted, degenerate=degenerate,
    )


def evaluate(clf: Classifier, split: ingest.DatasetSplit, technique: str | None = None, batch_size: int = 1024) -> MetricsReport:
    """Predict ``split`` with ``clf`` and score it."""
    if technique is not None and technique != clf.technique:
        raise EvaluationError(f"model was trained on {clf.technique!r} matrices, not {technique!r}")
    if len(split) == 0:
        raise EvaluationError("cannot evaluate an empty split")
    y = ingest.task_labels(split.labels, clf.task)
    start = time.perf_counter()
    pred = clf.predict(split.features, batch_size)
    elapsed = time.perf_counter() - start
    report = metrics_from_confusion(confusion_matrix(y, pred, clf.n_classes), clf.task)
    report.technique = clf.technique
    report.architecture = clf.architecture
    report.total_time_s = elapsed
    return report


def published_deltas(report: MetricsReport) -> list[tuple[str, float, float, float]]:
    """(metric, ours, published, ours - published) for the matching table cell."""
    ref = PUBLISHED_TABLES[report.task].get((report.technique, report.architecture))
    if ref is None:
        raise EvaluationError(f"no published reference for {report.technique}/{report.architecture}")
    ours = (report.accuracy, report.precision, report.recall, report.f1)
    names = ("test accuracy", "precision", "recall", "f1")
    return [(n, o, p, o - p) for n, o, p in zip(names, ours, ref[1:])]


# --------------------------------------------------------------------------
# latency


@contextmanager
def single_threaded():
    """Pin BLAS/OpenMP pools to one thread for the duration of the block."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


@dataclass
class LatencyStats:
    records: int
    repetitions: int
    batch_size: int
    total_s: float
    mean_us: float
    median_us: float
    p99_us: float
    forward_total_s: float
    forward_mean_us: float
    forward_median_us: float
    forward_p99_us: float

    def summary(self) -> str:
        return (
            f"{self.records} records x {self.repetitions} reps (batch {self.batch_size}), single thread\n"
            f"  end-to-end  total {1e3 * self.total_s:9.1f} ms  mean {self.mean_us:8.2f} us"
            f"  median {self.median_us:8.2f} us  p99 {self.p99_us:8.2f} us\n"
            f"  forward     total {1e3 * self.forward_total_s:9.1f} ms  mean {self.forward_mean_us:8.2f} us"
            f"  median {self.forward_median_us:8.2f} us  p99 {self.forward_p99_us:8.2f} us"
        )


def _timed_pass(fn, chunks):
    per_record, total = [], 0.0
    for chunk in chunks:
        t0 = time.perf_counter()
        fn(chunk)
        dt = time.perf_counter() - t0
        total += dt
        per_record.append(dt / len(chunk))
    return total, per_record


def benchmark_latency(
    clf: Classifier,
    features: np.ndarray,
    repetitions: int = 3,
    batch_size: int = 256,
    technique: str | None = None,
    min_records: int = 1000,
) -> LatencyStats:
    """Per-record inference time, single-threaded, after a warm-up pass.

    Records are fed in chunks of ``batch_size``. The end-to-end figure
    includes the matrix transform, the forward figure does not. Totals are
    the median over repetitions; per-record percentiles pool every chunk.
    """
    if technique is not None and technique != clf.technique:
        raise EvaluationError(f"model was trained on {clf.technique!r} matrices, not {technique!r}")
    features = np.asarray(features)
    n = len(features)
    if n < min_records:
        raise EvaluationError(f"latency benchmark needs at least {min_records} records, got {n}")
    net = clf.net
    raw_chunks = [features[i : i + batch_size] for i in range(0, n, batch_size)]

    def end_to_end(chunk):
        net.apply_head(net.forward(clf.encode(chunk))).argmax(axis=1)

    def forward_only(chunk):
        net.apply_head(net.forward(chunk)).argmax(axis=1)

    with single_threaded():
        encoded = [clf.encode(c).astype(net.dtype) for c in raw_chunks]
        _timed_pass(end_to_end, raw_chunks)
        _timed_pass(forward_only, encoded)
        e2e_totals, fwd_totals, e2e_each, fwd_each = [], [], [], []
        for _ in range(repetitions):
            t, each = _timed_pass(end_to_end, raw_chunks)
            e2e_totals.append(t)
            e2e_each += each
            t, each = _timed_pass(forward_only, encoded)
            fwd_totals.append(t)
            fwd_each += each
    net._forward_done = False

    total = statistics.median(e2e_totals)
    fwd_total = statistics.median(fwd_totals)
    us = lambda xs: 1e6 * np.asarray(xs)
    return LatencyStats(
        records=n,
        repetitions=repetitions,
        batch_size=batch_size,
        total_s=total,
        mean_us=1e6 * total / n,
        median_us=float(np.median(us(e2e_each))),
        p99_us=float(np.percentile(us(e2e_each), 99)),
        forward_total_s=fwd_total,
        forward_mean_us=1e6 * fwd_total / n,
        forward_median_us=float(np.median(us(fwd_each))),
        forward_p99_us=float(np.percentile(us(fwd_each), 99)),
    )


# --------------------------------------------------------------------------
# synthetic data

# Eight evenly spaced mean levels in [-0.8, 0.8]; class c uses the sequence
# rotated by 3c, so no class mean is the negation of another (GAF cannot
# tell F from -F).
SYNTH_LEVELS = np.linspace(-0.8, 0.8, 8)
SYNTH_SIGMA = 0.1


def synthetic_means(classes: int) -> np.ndarray:
    idx = (np.arange(classes)[:, None] * 3 + np.arange(ingest.N_FEATURES)[None, :]) % len(SYNTH_LEVELS)
    return SYNTH_LEVELS[idx]


def _draw(counts, seed: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.asarray(counts, dtype=np.int64)
    rng = np.random.default_rng(seed)
    means = synthetic_means(len(counts))
    xs = [
        np.clip(means[c] + rng.normal(0.0, SYNTH_SIGMA, size=(n, ingest.N_FEATURES)), -1.0, 1.0)
        for c, n in enumerate(counts)
    ]
    return np.concatenate(xs), np.repeat(np.arange(len(counts)), counts)


def generate_synthetic(n_per_class: int, classes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs around fixed class means, clamped to ``[-1, 1]``.

    Returns ``(features[N, 16], class_ids[N])`` grouped by class. With two
    classes the ids are 0 (Normal) and 1 (De-Authentication).
    """
    if classes not in (2, ingest.N_CLASSES):
        raise ValueError(f"classes must be 2 or {ingest.N_CLASSES}, got {classes}")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    return _draw([n_per_class] * classes, seed)


def generate_imbalanced(n_per_attack: int, classes: int, normal_ratio: float, seed: int):
    """Like :func:`generate_synthetic` but with ``normal_ratio`` Normals per attack record."""
    if classes not in (2, ingest.N_CLASSES):
        raise ValueError(f"classes must be 2 or {ingest.N_CLASSES}, got {classes}")
    if n_per_attack < 1 or not normal_ratio > 0:
        raise ValueError("need n_per_attack >= 1 and a positive normal ratio")
    n_normal = int(round(normal_ratio * n_per_attack * (classes - 1)))
    return _draw([n_normal] + [n_per_attack] * (classes - 1), seed)


# Raw value range used when rendering synthetic vectors as AWID-style text.
_RAW_RANGES = {
    "frame.len": (40.0, 1600.0),
    "radiotap.length": (24.0, 64.0),
    "radiotap.dbm_antsignal": (-95.0, -20.0),
    "wlan.duration": (0.0, 32768.0),
    "radiotap.channel.freq": (2412.0, 5825.0),
    "wlan.fc.type": (0.0, 2.0),
    "wlan.fc.subtype": (0.0, 15.0),
    "wlan.fc.ds": (0.0, 3.0),
}


def render_raw_rows(features: np.ndarray, class_ids: np.ndarray, seed: int = 0) -> list[list[str]]:
    """Map scaled vectors onto plausible raw AWID3 text fields.

    Each feature is mapped affinely onto a raw range. DS bits become hex
    integers and TSFT a presence flag; the antenna field lists the true
    maximum plus a weaker second reading.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for x, c in zip(np.asarray(features), np.asarray(class_ids)):
        row = []
        for name, v in zip(ingest.FEATURES, x):
            lo, hi = _RAW_RANGES.get(name, (0.0, 1.0))
            raw = lo + (v + 1.0) / 2.0 * (hi - lo)
            if name == "wlan.fc.ds":
                row.append(f"0x{int(round(raw)):08x}")
            elif name == "radiotap.present.tsft":
                row.append("1" if v > 0 else "0")
            elif name == "radiotap.dbm_antsignal":
                second = raw - rng.uniform(1.0, 8.0)
                row.append(f"{raw:.6f},{second:.6f}")
            else:
                row.append(f"{raw:.9g}")
        row.append(ingest.CLASS_NAMES[int(c)])
        rows.append(row)
    return rows


def write_raw_csv(path, features: np.ndarray, class_ids: np.ndarray, seed: int = 0, extra_columns: int = 0) -> None:
    header = list(ingest.FEATURES) + [ingest.LABEL_COLUMN]
    extra = [f"extra.{i}" for i in range(extra_columns)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(extra + header)
        for row in render_raw_rows(features, class_ids, seed):
            w.writerow(["0"] * extra_columns + row)


# --------------------------------------------------------------------------
# comparison tables


def _best_per_technique(reports: list[MetricsReport]) -> dict[str, MetricsReport]:
    # higher F1, then higher accuracy, then model name
    rank = lambda r: (-r.f1, -r.accuracy, r.architecture)
    best: dict[str, MetricsReport] = {}
    for r in reports:
        if r.technique not in best or rank(r) < rank(best[r.technique]):
            best[r.technique] = r
    return best


def compare_report(reports: list[MetricsReport]) -> tuple[str, str]:
    """Technique x model grid as ``(csv_text, plain_text)``; best F1 per technique starred."""
    if not reports:
        raise EvaluationError("no reports to compare")
    tasks = {r.task for r in reports}
    if len(tasks) > 1:
        raise EvaluationError(f"cannot mix tasks in one table: {sorted(tasks)}")
    best = _best_per_technique(reports)
    order = {t: i for i, t in enumerate(("cyclic", "circulant", "grayscale-circulant", "correlation", "gaf"))}
    ordered = sorted(reports, key=lambda r: (order.get(r.technique, 99), r.technique, r.architecture))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["technique", "model", "train_accuracy", "test_accuracy", "precision", "recall", "f1", "best"])
    table = []
    for r in ordered:
        mark = best[r.technique] is r
        train_acc = "" if r.train_accuracy is None else f"{r.train_accuracy:.2f}"
        cells = [r.technique, r.architecture.upper(), train_acc, f"{r.accuracy:.2f}",
                 f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}"]
        w.writerow(cells + ["*" if mark else ""])
        table.append(cells + ["*" if mark else ""])

    heads = ["Technique", "Model", "Train", "Test", "Precision", "Recall", "F1-score", ""]
    widths = [max(len(str(row[i])) for row in [heads] + table) for i in range(len(heads))]
    fmt = lambda row: "  ".join(str(c).ljust(wd) for c, wd in zip(row, widths)).rstrip()
    lines = [fmt(heads), "-" * len(fmt(heads))]
    prev = None
    for row in table:
        shown = list(row)
        if row[0] == prev:
            shown[0] = ""
        prev = row[0]
        lines.append(fmt(shown))
    lines.append("* best F1 within technique (ties: accuracy, then model name)")
    return buf.getvalue(), "\n".join(lines)


def load_report_csv(path) -> MetricsReport:
    """Rebuild a (confusion-free) report from a metrics CSV written by ``to_csv``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = dict(list(csv.reader(fh))[1:])
    n = len(class_names(rows["task"]))
    rep = MetricsReport(
        task=rows["task"],
        confusion=np.zeros((n, n), dtype=np.int64),
        accuracy=float(rows["accuracy"]),
        precision=float(rows["precision"]),
        recall=float(rows["recall"]),
        f1=float(rows["f1"]),
        technique=rows["technique"],
        architecture=rows["architecture"],
        total_time_s=float(rows.get("total_time_s", 0) or 0),
    )
    if rows.get("train_accuracy"):
        rep.train_accuracy = float(rows["train_accuracy"])
    return rep
