"""Mask-selection baselines: magnitude 2:4 and activation-weighted 2:4.

Both emit 2:4-valid masks directly from the pretrained weights with no
training loop. The activation-weighted score multiplies each weight
magnitude by the l2 norm of its input feature over a calibration set, so
weights feeding low-energy inputs are pruned first.
"""

from __future__ import annotations

import numpy as np

from .tensor_ops import project_24
from .validation import check_weight_matrix

__all__ = ["magnitude_24", "wanda_24", "activation_col_norms"]


def magnitude_24(W0) -> np.ndarray:
    """Per-block top-2 magnitude mask of the pretrained weights."""
    return project_24(W0)


def activation_col_norms(X) -> np.ndarray:
    """Per-input-feature l2 norms over a calibration batch (rows = samples)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("activations contain non-finite entries")
    return np.sqrt((X * X).sum(axis=0))


def wanda_24(W0, col_norms) -> np.ndarray:
    """Activation-weighted 2:4 mask: keep top-2 of |W0_ij| * col_norms[j].

    Ties break toward the lower column index, matching :func:`magnitude_24`;
    with uniform column norms the two masks are identical.
    """
    W0 = check_weight_matrix(W0, name="W0")
    col_norms = np.asarray(col_norms, dtype=np.float64)
    if col_norms.shape != (W0.shape[1],):
        raise ValueError(
            f"col_norms must have length {W0.shape[1]}, got shape {col_norms.shape}"
        )
    if np.any(~np.isfinite(col_norms)) or np.any(col_norms < 0.0):
        raise ValueError("col_norms must be finite and nonnegative")
    return project_24(np.abs(W0) * col_norms)
