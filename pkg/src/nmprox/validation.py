"""Input validation helpers shared across the package.

Weight matrices are 2-D float arrays whose column count is a multiple of 4;
masks are boolean arrays of the same shape. Validators return clean float64 /
bool copies so downstream code can mutate freely.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_block4",
    "check_weight_matrix",
    "check_mask",
    "check_mask_is_24",
]


def check_block4(y) -> np.ndarray:
    """Validate a single 4-element block, returning a float64 copy."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (4,):
        raise ValueError(f"expected a block of shape (4,), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("block contains non-finite entries")
    return y.copy()


def check_weight_matrix(W, name: str = "W") -> np.ndarray:
    """Validate a 2-D weight matrix with 4-aligned columns, as float64."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={W.ndim}")
    if W.shape[1] % 4 != 0:
        raise ValueError(
            f"{name} needs a column count divisible by 4, got {W.shape[1]}"
        )
    if W.shape[0] == 0 or W.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError(f"{name} contains non-finite entries")
    return W.copy()


def check_mask(M, shape=None, name: str = "mask") -> np.ndarray:
    """Validate a boolean mask, optionally against an expected shape."""
    M = np.asarray(M)
    if M.dtype != np.bool_:
        if not np.all((M == 0) | (M == 1)):
            raise ValueError(f"{name} must be boolean or 0/1 valued")
        M = M.astype(bool)
    if M.ndim != 2 or M.shape[1] % 4 != 0:
        raise ValueError(f"{name} must be 2-D with 4-aligned columns, got {M.shape}")
    if shape is not None and M.shape != tuple(shape):
        raise ValueError(f"{name} has shape {M.shape}, expected {tuple(shape)}")
    return M.copy()


def check_mask_is_24(M, name: str = "mask") -> np.ndarray:
    """Validate that every aligned 4-block of ``M`` keeps exactly 2 entries."""
    M = check_mask(M, name=name)
    per_block = M.reshape(-1, 4).sum(axis=1)
    if not np.all(per_block == 2):
        bad = int(np.argmax(per_block != 2))
        raise ValueError(
            f"{name} is not 2:4 structured: block {bad} keeps "
            f"{int(per_block[bad])} entries instead of 2"
        )
    return M
