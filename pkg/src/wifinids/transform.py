"""Feature-vector to 16x16 matrix encodings.

All encoders are vectorised over a leading batch axis: they accept either a
single vector of shape ``(16,)`` or a batch ``(N, 16)`` and return
``(16, 16)`` or ``(N, 16, 16)`` respectively.
"""

from __future__ import annotations

import os
from typing import Callable

import numpy as np

SIZE = 16
TECHNIQUES = ("cyclic", "circulant", "grayscale-circulant", "correlation", "gaf")

# arccos domain slack for float noise picked up during scaling
GAF_TOLERANCE = 1e-9

_ROW = np.arange(SIZE)[:, None]
_COL = np.arange(SIZE)[None, :]
_CYCLIC_INDEX = (_ROW + _COL) % SIZE
_CIRCULANT_INDEX = (_ROW - _COL) % SIZE


class TransformError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)


def _as_batch(f) -> tuple[np.ndarray, bool]:
    arr = np.asarray(f, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != SIZE:
        raise TransformError(f"expected feature vectors of length {SIZE}, got shape {np.shape(f)}")
    return arr, single


def _out(m: np.ndarray, single: bool) -> np.ndarray:
    return m[0] if single else m


def cyclic(f) -> np.ndarray:
    """Row ``r`` is the vector rotated left by ``r``: ``M[i, j] = f[(i + j) % 16]``."""
    arr, single = _as_batch(f)
    return _out(arr[:, _CYCLIC_INDEX], single)


def circulant(f) -> np.ndarray:
    """Column ``c`` is the vector rotated down by ``c``: ``M[i, j] = f[(i - j) % 16]``."""
    arr, single = _as_batch(f)
    return _out(arr[:, _CIRCULANT_INDEX], single)


def quantize_gray(f) -> np.ndarray:
    """Map ``[-1, 1]`` onto integer grey levels 0..255, rounding half up."""
    g = np.floor((np.asarray(f, dtype=np.float64) + 1.0) * 255.0 / 2.0 + 0.5)
    return np.clip(g, 0, 255).astype(np.uint8)


def grayscale_circulant(f) -> np.ndarray:
    """Circulant layout of the 8-bit quantised vector, rescaled to ``[-1, 1]``."""
    arr, single = _as_batch(f)
    y = 2.0 * quantize_gray(arr).astype(np.float64) / 255.0 - 1.0
    return _out(y[:, _CIRCULANT_INDEX], single)


def correlation(f) -> np.ndarray:
    """Pearson correlation between every pair of columns of the cyclic matrix.

    Columns with zero variance (only possible for a constant vector)
    correlate 0 with everything else; the diagonal is always 1.
    """
    arr, single = _as_batch(f)
    m = arr[:, _CYCLIC_INDEX]
    flat = m.max(axis=1) == m.min(axis=1)
    dev = np.where(flat[:, None, :], 0.0, m - m.mean(axis=1, keepdims=True))
    cov = np.einsum("nki,nkj->nij", dev, dev)
    ss = np.einsum("nki,nki->ni", dev, dev)
    denom = np.sqrt(ss[:, :, None] * ss[:, None, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    rho = np.clip(rho, -1.0, 1.0)
    rho[:, np.arange(SIZE), np.arange(SIZE)] = 1.0
    return _out(rho, single)


def _check_gaf_domain(arr: np.ndarray, single: bool) -> np.ndarray:
    bad = np.abs(arr) > 1.0 + GAF_TOLERANCE
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        raise TransformError(
            f"GAF input outside [-1, 1]: {arr[row][bad[row]].tolist()}",
            None if single else row,
        )
    return np.clip(arr, -1.0, 1.0)


def gaf(f) -> np.ndarray:
    """Gramian angular summation field ``cos(phi_i + phi_j)``, ``phi = arccos(f)``.

    Evaluated through the angle-sum identity
    ``f_i f_j - sqrt(1 - f_i^2) sqrt(1 - f_j^2)``, which avoids the arccos.
    """
    arr, single = _as_batch(f)
    c = _check_gaf_domain(arr, single)
    s = np.sqrt(1.0 - c * c)
    g = c[:, :, None] * c[:, None, :] - s[:, :, None] * s[:, None, :]
    return _out(np.clip(g, -1.0, 1.0), single)


_ENCODERS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "cyclic": cyclic,
    "circulant": circulant,
    "grayscale-circulant": grayscale_circulant,
    "correlation": correlation,
    "gaf": gaf,
}


def get_transform(technique: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return _ENCODERS[technique]
    except KeyError:
        raise ValueError(
            f"unknown technique {technique!r}; choose one of: {', '.join(TECHNIQUES)}"
        ) from None


def transform_batch(technique: str, records) -> np.ndarray:
    """Encode a batch of feature vectors, preserving order.

    The first invalid record is reported by index.
    """
    encode = get_transform(technique)
    arr = np.asarray(records, dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, SIZE, SIZE))
    if arr.ndim != 2 or arr.shape[1] != SIZE:
        raise TransformError(f"expected a batch of shape (N, {SIZE}), got {arr.shape}")
    bad = ~np.isfinite(arr).all(axis=1)
    if bad.any():
        raise TransformError("non-finite feature value", int(np.argmax(bad)))
    return encode(arr)


def to_pixels(m: np.ndarray) -> np.ndarray:
    """Debug view of a matrix as 8-bit grey levels."""
    return quantize_gray(np.clip(m, -1.0, 1.0))


def write_pgm(m: np.ndarray, path: str | os.PathLike, scale: int = 1) -> None:
    """Export one matrix as a binary PGM image (debug only, not bit-exact)."""
    px = to_pixels(np.asarray(m))
    if scale > 1:
        px = np.kron(px, np.ones((scale, scale), dtype=np.uint8))
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())
