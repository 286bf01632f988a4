"""Binary and CSV formats for weights, masks, checkpoints, and datasets.

Weight tensors: 16-byte header (magic ``NMPX``, version u32, rows u32,
cols u32, all little-endian) followed by the row-major float64 payload.
Masks: same header with magic ``NMMK``, payload is the row-major bit
sequence packed 8 bits per byte (big-endian within each byte, numpy
``packbits`` convention). Checkpoints: magic ``NMCK`` header carrying the
layer count and step counter, followed by one weight-tensor record per
layer. Calibration sets: CSV with one row per sample, input columns
``x0..`` then target columns ``y0..``.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .validation import check_mask, check_weight_matrix

__all__ = [
    "MAGIC_WEIGHTS",
    "MAGIC_MASK",
    "MAGIC_CHECKPOINT",
    "FORMAT_VERSION",
    "save_weights",
    "load_weights",
    "save_mask",
    "load_mask",
    "save_checkpoint",
    "load_checkpoint",
    "save_calibration_csv",
    "load_calibration_csv",
    "write_metrics_csv",
]

MAGIC_WEIGHTS = b"NMPX"
MAGIC_MASK = b"NMMK"
MAGIC_CHECKPOINT = b"NMCK"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIII")
_CKPT_HEADER = struct.Struct("<4sIIQ")

METRICS_COLUMNS = [
    "step",
    "loss",
    "sparsity_ratio",
    "mask_similarity",
    "rel_norm_gap",
    "reg24",
    "regw0",
]


def _read_header(buf: bytes, offset: int, magic: bytes, path) -> tuple[int, int, int]:
    if len(buf) < offset + _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    got_magic, version, rows, cols = _HEADER.unpack_from(buf, offset)
    if got_magic != magic:
        raise ValueError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return rows, cols, offset + _HEADER.size


def save_weights(path, W) -> None:
    """Write a weight matrix in the NMPX format."""
    W = check_weight_matrix(W)
    rows, cols = W.shape
    payload = np.ascontiguousarray(W, dtype="<f8").tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC_WEIGHTS, FORMAT_VERSION, rows, cols) + payload)


def load_weights(path) -> np.ndarray:
    """Read a weight matrix in the NMPX format."""
    buf = Path(path).read_bytes()
    rows, cols, off = _read_header(buf, 0, MAGIC_WEIGHTS, path)
    expect = rows * cols * 8
    if len(buf) - off != expect:
        raise ValueError(f"{path}: payload is {len(buf) - off} bytes, expected {expect}")
    W = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=off)
    return check_weight_matrix(W.reshape(rows, cols))


def save_mask(path, M) -> None:
    """Write a boolean mask in the NMMK packed-bit format."""
    M = check_mask(M)
    rows, cols = M.shape
    payload = np.packbits(M.reshape(-1)).tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC_MASK, FORMAT_VERSION, rows, cols) + payload)


def load_mask(path) -> np.ndarray:
    """Read a boolean mask in the NMMK packed-bit format."""
    buf = Path(path).read_bytes()
    rows, cols, off = _read_header(buf, 0, MAGIC_MASK, path)
    n = rows * cols
    expect = (n + 7) // 8
    if len(buf) - off != expect:
        raise ValueError(f"{path}: payload is {len(buf) - off} bytes, expected {expect}")
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8, offset=off), count=n)
    return bits.astype(bool).reshape(rows, cols)


def save_checkpoint(path, layers, step: int) -> None:
    """Write a training checkpoint: layer weight tensors plus the step counter."""
    layers = [check_weight_matrix(W, name=f"layers[{i}]") for i, W in enumerate(layers)]
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    parts = [_CKPT_HEADER.pack(MAGIC_CHECKPOINT, FORMAT_VERSION, len(layers), step)]
    for W in layers:
        rows, cols = W.shape
        parts.append(_HEADER.pack(MAGIC_WEIGHTS, FORMAT_VERSION, rows, cols))
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[list[np.ndarray], int]:
    """Read a checkpoint, returning (layers, step)."""
    buf = Path(path).read_bytes()
    if len(buf) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, n_layers, step = _CKPT_HEADER.unpack_from(buf, 0)
    if magic != MAGIC_CHECKPOINT:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC_CHECKPOINT!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _CKPT_HEADER.size
    layers = []
    for _ in range(n_layers):
        rows, cols, off = _read_header(buf, off, MAGIC_WEIGHTS, path)
        count = rows * cols
        if len(buf) < off + count * 8:
            raise ValueError(f"{path}: truncated layer payload")
        W = np.frombuffer(buf, dtype="<f8", count=count, offset=off)
        layers.append(W.reshape(rows, cols).copy())
        off += count * 8
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    return layers, int(step)


def save_calibration_csv(path, inputs, targets) -> None:
    """Write a calibration set as CSV: one row per sample, inputs then targets."""
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"inputs {X.shape} and targets {Y.shape} must be 2-D with equal row counts")
    header = [f"x{j}" for j in range(X.shape[1])] + [f"y{j}" for j in range(Y.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi in zip(X, Y):
            writer.writerow([f"{v:.17g}" for v in xi] + [f"{v:.17g}" for v in yi])


def load_calibration_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a calibration CSV, splitting columns by their x/y header names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty file")
        n_in = sum(1 for c in header if c.startswith("x"))
        n_out = sum(1 for c in header if c.startswith("y"))
        if n_in == 0 or n_out == 0 or n_in + n_out != len(header):
            raise ValueError(f"{path}: header must be x0..x{{d-1}},y0..y{{m-1}}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != n_in + n_out:
        raise ValueError(f"{path}: inconsistent row widths")
    return data[:, :n_in].copy(), data[:, n_in:].copy()


def write_metrics_csv(path, records) -> None:
    """Write training metrics rows (see METRICS_COLUMNS for the schema)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.step,
                    f"{r.loss:.17g}",
                    f"{r.sparsity_ratio:.17g}",
                    f"{r.mask_similarity_to_early:.17g}",
                    f"{r.relative_norm_gap:.17g}",
                    f"{r.reg24_value:.17g}",
                    f"{r.regw0_value:.17g}",
                ]
            )
