"""Binary and CSV matrix files.

The binary format is used repo-wide: magic ``GSM1``, row and column counts
as little-endian u64, then the float64 payload in row-major order.  The CSV
reader/writer exists for hand-written test inputs.
"""

import struct

import numpy as np

from .errors import InputError

MAGIC = b"GSM1"
_HEADER = struct.Struct("<4sQQ")


def save_matrix(path, array) -> None:
    a = np.ascontiguousarray(array, dtype=np.float64)
    if a.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise InputError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}")
        payload = fh.read(8 * rows * cols)
        if len(payload) != 8 * rows * cols:
            raise InputError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def save_csv_matrix(path, array) -> None:
    a = np.asarray(array, dtype=np.float64)
    if a.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {a.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise InputError(f"{path}: empty CSV matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"{path}: ragged CSV rows")
    return np.asarray(rows, dtype=np.float64)
