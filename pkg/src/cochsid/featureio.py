"""CGRM binary matrices and PGM previews for cochleagrams and feature images.

CGRM layout: ``b"CGRM"``, u16 version, u32 rows, u32 cols, then rows*cols
little-endian float32 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CGRM_MAGIC = b"CGRM"
CGRM_VERSION = 1
_HEADER = struct.Struct("<4sHII")


class FeatureFormatError(ValueError):
    pass


def _matrix(obj) -> np.ndarray:
    a = np.asarray(getattr(obj, "values", obj))
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def cgrm_bytes(matrix) -> bytes:
    a = _matrix(matrix)
    rows, cols = a.shape
    return _HEADER.pack(CGRM_MAGIC, CGRM_VERSION, rows, cols) + a.astype("<f4").tobytes(order="C")


def write_cgrm(matrix, path) -> None:
    Path(path).write_bytes(cgrm_bytes(matrix))


def parse_cgrm(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FeatureFormatError("truncated CGRM header")
    magic, version, rows, cols = _HEADER.unpack_from(buf)
    if magic != CGRM_MAGIC:
        raise FeatureFormatError("not a CGRM file")
    if version != CGRM_VERSION:
        raise FeatureFormatError(f"unsupported CGRM version {version}")
    expected = _HEADER.size + 4 * rows * cols
    if len(buf) != expected:
        raise FeatureFormatError(f"CGRM payload is {len(buf)} bytes, expected {expected}")
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)


def read_cgrm(path) -> np.ndarray:
    return parse_cgrm(Path(path).read_bytes())


def write_pgm(matrix, path) -> None:
    """8-bit binary PGM, min-max scaled; row 0 (lowest channel) is drawn at the bottom."""
    a = _matrix(matrix).astype(np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.full(a.shape, 128.0) if hi <= lo else 255.0 * (a - lo) / (hi - lo)
    pix = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)[::-1]
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pix.tobytes())
