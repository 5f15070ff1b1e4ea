"""Raw traffic CSV parsing, per-feature preprocessing, rebalancing and splits.

Records flow through four stages:

1. :func:`parse_csv` projects the 16 link-layer columns (plus ``attack_map``)
   out of an AWID3-style CSV.
2. :func:`decode_record` turns the text fields into raw numbers (max dBm
   selection, hex Frame Control DS bits, TSFT presence flag).
3. :func:`undersample_normals` and :func:`stratified_split` rebalance and
   partition on labels only.
4. :func:`fit_scaler` learns per-feature min/max on the training split and
   :func:`preprocess_record` / :meth:`ScalingParams.transform` map every
   record into ``[-1, 1]``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    "frame.len",
    "radiotap.length",
    "radiotap.dbm_antsignal",
    "wlan.duration",
    "radiotap.present.tsft",
    "radiotap.channel.freq",
    "radiotap.channel.flags.cck",
    "radiotap.channel.flags.ofdm",
    "wlan.fc.type",
    "wlan.fc.subtype",
    "wlan.fc.ds",
    "wlan.fc.frag",
    "wlan.fc.retry",
    "wlan.fc.pwrmgt",
    "wlan.fc.moredata",
    "wlan.fc.protected",
)
N_FEATURES = len(FEATURES)
LABEL_COLUMN = "attack_map"

ANTSIGNAL_IDX = FEATURES.index("radiotap.dbm_antsignal")
TSFT_IDX = FEATURES.index("radiotap.present.tsft")
DS_IDX = FEATURES.index("wlan.fc.ds")

CLASS_NAMES: tuple[str, ...] = (
    "Normal",
    "De-Authentication",
    "Disassociation",
    "Re-Association",
    "Rogue AP",
    "Krack",
    "Kr00k",
    "Evil Twin",
)
N_CLASSES = len(CLASS_NAMES)

# Spellings used by the AWID3 CSV release itself.
_LABEL_ALIASES = {
    "deauth": 1,
    "disas": 2,
    "(re)assoc": 3,
    "reassoc": 3,
    "rogueap": 4,
    "rogue_ap": 4,
    "evil_twin": 7,
    "eviltwin": 7,
}
_LABEL_IDS = {name.lower(): i for i, name in enumerate(CLASS_NAMES)}
_LABEL_IDS.update(_LABEL_ALIASES)

TASKS = ("binary", "multiclass")

_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


class IngestError(ValueError):
    """Base class for data-loading failures."""


class SchemaError(IngestError):
    def __init__(self, column: str, path: str | os.PathLike | None = None):
        self.column = column
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required column {column!r}{where}")


class RowError(IngestError):
    def __init__(self, line: int, message: str, path: str | os.PathLike | None = None):
        self.line = line
        self.path = path
        where = f"{path}:" if path is not None else "line "
        super().__init__(f"{where}{line}: {message}")


class LabelError(RowError):
    def __init__(self, line: int, value: str, path: str | os.PathLike | None = None):
        self.value = value
        super().__init__(line, f"unknown label {value!r}", path)


class RecordError(IngestError):
    """A record whose feature text cannot be decoded."""


class SplitError(IngestError):
    pass


@dataclass(frozen=True)
class RawRecord:
    """One CSV row projected onto the 16 feature columns."""

    fields: tuple[str, ...]
    label: str
    line: int = 0

    def __post_init__(self):
        if len(self.fields) != N_FEATURES:
            raise RecordError(f"expected {N_FEATURES} feature fields, got {len(self.fields)}")

    @property
    def class_id(self) -> int:
        return label_to_id(self.label)


def label_to_id(label: str) -> int:
    """Map a label string to its multiclass id (case-insensitive)."""
    try:
        return _LABEL_IDS[label.strip().lower()]
    except KeyError:
        raise IngestError(f"unknown label {label!r}") from None


def task_labels(class_ids: np.ndarray, task: str) -> np.ndarray:
    """Project multiclass ids onto the labels of ``task``."""
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if task == "binary":
        return (class_ids != 0).astype(np.int64)
    if task == "multiclass":
        return class_ids
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def n_task_classes(task: str) -> int:
    return 2 if task == "binary" else N_CLASSES


# --------------------------------------------------------------------------
# parsing


def parse_csv(
    path: str | os.PathLike,
    schema: Sequence[str] = FEATURES,
    lenient: bool = False,
    skipped: list[RowError] | None = None,
) -> Iterator[RawRecord]:
    """Yield a :class:`RawRecord` per data row of ``path`` in file order.

    Columns outside ``schema`` and ``attack_map`` are ignored. With
    ``lenient=True`` malformed rows and unknown labels are skipped (and
    appended to ``skipped`` when given) instead of raising.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(schema[0], path) from None
        positions = {name: i for i, name in enumerate(header)}
        for name in (*schema, LABEL_COLUMN):
            if name not in positions:
                raise SchemaError(name, path)
        cols = [positions[name] for name in schema]
        label_col = positions[LABEL_COLUMN]
        width = len(header)

        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                if len(row) != width:
                    raise RowError(line, f"expected {width} fields, got {len(row)}", path)
                label = row[label_col].strip()
                if label.lower() not in _LABEL_IDS:
                    raise LabelError(line, label, path)
                yield RawRecord(tuple(row[c].strip() for c in cols), label, line)
            except RowError as exc:
                if not lenient:
                    raise
                log.warning("skipping %s", exc)
                if skipped is not None:
                    skipped.append(exc)


# --------------------------------------------------------------------------
# decoding and scaling


def _parse_number(text: str) -> float:
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return 1.0 if low == "true" else 0.0
    if low.startswith(("0x", "-0x")):
        return float(int(t, 16))
    value = float(t)
    if not math.isfinite(value):
        raise ValueError(t)
    return value


def parse_antsignal(text: str) -> float:
    """Return the strongest (maximum) dBm reading of a multi-valued field.

    Values may be comma separated (``-44,-46``) or run together with the
    minus sign as the separator (``-44-46``).
    """
    values = [float(v) for v in _NUMBER.findall(text)]
    if not values:
        raise RecordError(f"empty antenna signal list {text!r}")
    return max(values)


def parse_ds(text: str) -> float:
    """Frame Control DS bits, given as hexadecimal text."""
    t = text.strip()
    if not t:
        raise RecordError("empty wlan.fc.ds field")
    try:
        return float(int(t, 16))
    except ValueError:
        raise RecordError(f"wlan.fc.ds is not hexadecimal: {text!r}") from None


def parse_tsft(text: str) -> float:
    try:
        return 1.0 if _parse_number(text) != 0 else 0.0
    except ValueError:
        raise RecordError(f"unparseable radiotap.present.tsft {text!r}") from None


def decode_record(r: RawRecord) -> np.ndarray:
    """Raw numeric value of every feature, before scaling."""
    out = np.empty(N_FEATURES, dtype=np.float64)
    for i, text in enumerate(r.fields):
        if i == ANTSIGNAL_IDX:
            out[i] = parse_antsignal(text)
        elif i == DS_IDX:
            out[i] = parse_ds(text)
        elif i == TSFT_IDX:
            out[i] = parse_tsft(text)
        else:
            try:
                out[i] = _parse_number(text)
            except ValueError:
                raise RecordError(
                    f"line {r.line}: unparseable {FEATURES[i]} value {text!r}"
                ) from None
    return out


def decode_records(records: Iterable[RawRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Decode a record stream into ``(values[N, 16], class_ids[N])``."""
    rows, labels = [], []
    for r in records:
        rows.append(decode_record(r))
        labels.append(r.class_id)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), N_FEATURES)
    return values, np.array(labels, dtype=np.int64)


@dataclass
class ScalingParams:
    """Per-feature min/max learned on one split."""

    mins: np.ndarray
    maxs: np.ndarray
    fitted_on: str = "train"

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != (N_FEATURES,) or self.maxs.shape != (N_FEATURES,):
            raise ValueError("scaling params need one min/max pair per feature")
        if np.any(self.mins > self.maxs):
            bad = FEATURES[int(np.argmax(self.mins > self.maxs))]
            raise ValueError(f"min > max for feature {bad}")

    @property
    def constant(self) -> np.ndarray:
        return self.mins == self.maxs

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Scale decoded values into ``[-1, 1]``, clamping out-of-range input.

        The TSFT presence flag is already ``{0, 1}`` and passes through.
        Constant features map to 0.
        """
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        scaled = 2.0 * (values - self.mins) / safe - 1.0
        scaled = np.where(span > 0, scaled, 0.0)
        scaled[..., TSFT_IDX] = values[..., TSFT_IDX]
        return np.clip(scaled, -1.0, 1.0)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"fitted_on = {self.fitted_on}\n")
            for name, lo, hi in zip(FEATURES, self.mins, self.maxs):
                fh.write(f"{name} = {float(lo)!r}, {float(hi)!r}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ScalingParams":
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise IngestError(f"malformed scaler line {line!r}")
                entries[key.strip()] = value.strip()
        mins, maxs = [], []
        for name in FEATURES:
            if name not in entries:
                raise IngestError(f"scaler file lacks feature {name}")
            lo, hi = (float(v) for v in entries[name].split(","))
            mins.append(lo)
            maxs.append(hi)
        return cls(np.array(mins), np.array(maxs), entries.get("fitted_on", "train"))


def fit_scaler_values(values: np.ndarray, fitted_on: str = "train") -> ScalingParams:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != N_FEATURES or len(values) == 0:
        raise IngestError("cannot fit a scaler on an empty training split")
    params = ScalingParams(values.min(axis=0), values.max(axis=0), fitted_on)
    params.mins[TSFT_IDX], params.maxs[TSFT_IDX] = 0.0, 1.0
    for name in np.asarray(FEATURES)[params.constant]:
        log.info("feature %s is constant on %s; it will scale to 0", name, fitted_on)
    return params


def fit_scaler(train: Iterable[RawRecord]) -> ScalingParams:
    """Learn per-feature min/max over a training stream."""
    values, _ = decode_records(train)
    return fit_scaler_values(values)


def preprocess_record(r: RawRecord, s: ScalingParams) -> np.ndarray:
    """Decode and scale one record into a 16-element FeatureVector."""
    return s.transform(decode_record(r))


# --------------------------------------------------------------------------
# rebalancing and splitting


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def undersample_normals(labels: Sequence[int] | np.ndarray, target_ratio: float, seed: int) -> np.ndarray:
    """Indices kept after randomly thinning Normal (class 0) records.

    Every attack index is kept; ``min(round(ratio * n_attack), n_normal)``
    normal indices are drawn without replacement. The result is sorted, so
    the caller's record order survives.
    """
    if not target_ratio > 0:
        raise ValueError("target ratio must be positive")
    labels = np.asarray(labels)
    normal = np.flatnonzero(labels == 0)
    attack = np.flatnonzero(labels != 0)
    if len(attack) == 0:
        raise IngestError("no attack records; normal-to-attack ratio is undefined")
    keep = min(_round_half_up(target_ratio * len(attack)), len(normal))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(normal, size=keep, replace=False) if keep < len(normal) else normal
    return np.sort(np.concatenate([attack, chosen]))


def _allocate(counts: np.ndarray, fraction: float) -> np.ndarray:
    """Per-class share of ``fraction``: floors, then largest remainders."""
    exact = counts * fraction
    alloc = np.floor(exact).astype(np.int64)
    target = _round_half_up(float(counts.sum()) * fraction)
    remainder = exact - alloc
    # stable sort keeps lower class ids first among equal remainders
    order = np.argsort(-remainder, kind="stable")
    for k in order[: max(0, target - int(alloc.sum()))]:
        alloc[k] += 1
    return np.minimum(alloc, counts)


def stratified_split(
    labels: Sequence[int] | np.ndarray,
    seed: int,
    test_fraction: float = 0.3,
    val_fraction: float = 0.3,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return sorted ``(train, validation, test)`` index arrays.

    Each class is split into a test holdout and a training pool, and the
    pool is split again into train and validation, both per class.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    for c, n in zip(classes, counts):
        if n < 3:
            name = CLASS_NAMES[c] if 0 <= c < N_CLASSES else str(c)
            raise SplitError(f"class {name} has {n} record(s); need at least 3")
    rng = np.random.default_rng(seed)
    members = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]

    n_test = _allocate(counts, test_fraction)
    pools = counts - n_test
    n_val = _allocate(pools, val_fraction)

    train, val, test = [], [], []
    for idx, t, v in zip(members, n_test, n_val):
        test.append(idx[:t])
        val.append(idx[t : t + v])
        train.append(idx[t + v :])
    join = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, np.int64)
    return join(train), join(val), join(test)


# --------------------------------------------------------------------------
# split files


SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class DatasetSplit:
    name: str
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def class_counts(self, n_classes: int = N_CLASSES) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes)


_TRAILER = "#checksum"


def persist_split(split: DatasetSplit, path: str | os.PathLike) -> None:
    """Write a split as CSV with a trailing row-count and SHA-256 line."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for x, y in zip(split.features, split.labels):
        writer.writerow([repr(float(v)) for v in x] + [int(y)])
    body = buf.getvalue()
    digest = hashlib.sha256(body.encode()).hexdigest()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(FEATURES) + ",label\n")
        fh.write(body)
        fh.write(f"{_TRAILER},{split.name},{len(split)},{digest}\n")


def load_split(path: str | os.PathLike) -> DatasetSplit:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].rstrip("\n").split(",") != [*FEATURES, "label"]:
        raise IngestError(f"{path}: not a split file (bad header)")
    if len(lines) < 2 or not lines[-1].startswith(_TRAILER):
        raise IngestError(f"{path}: truncated split file (no checksum trailer)")
    _, name, n_rows, digest = lines[-1].strip().split(",")
    body = "".join(lines[1:-1])
    if hashlib.sha256(body.encode()).hexdigest() != digest:
        raise IngestError(f"{path}: checksum mismatch")
    rows = list(csv.reader(io.StringIO(body)))
    if len(rows) != int(n_rows):
        raise IngestError(f"{path}: expected {n_rows} rows, found {len(rows)}")
    if any(len(r) != N_FEATURES + 1 for r in rows):
        raise IngestError(f"{path}: row width mismatch")
    feats = np.array([[float(v) for v in r[:N_FEATURES]] for r in rows], dtype=np.float64)
    labels = np.array([int(r[N_FEATURES]) for r in rows], dtype=np.int64)
    return DatasetSplit(name, feats.reshape(-1, N_FEATURES), labels)
