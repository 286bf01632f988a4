"""Full-matrix operations: regularizers, blockwise prox, projection, metrics.

Weight matrices are blocked along the column (input/reduction) dimension into
groups of 4 consecutive entries, the layout used by 2:4 sparse hardware. All
operations are data-parallel over blocks; :func:`prox_map` runs the same
candidate enumeration as :func:`nmprox.blocks.enum_alm` on every block at
once, with converged blocks frozen so each block follows exactly the
trajectory the scalar solver would produce.
"""

from __future__ import annotations

import numpy as np

from .blocks import ProxParams
from .validation import check_mask, check_mask_is_24, check_weight_matrix

__all__ = [
    "reg24_total",
    "regw0_value",
    "regw0_grad",
    "prox_map",
    "project_24",
    "apply_mask_snap",
    "sparsity_ratio_24",
    "mask_similarity",
    "relative_norm_gap",
]


def reg24_total(W) -> float:
    """Sum of the blockwise 2:4 regularizer over all 4-blocks of ``W``.

    Zero exactly when every block has at most 2 nonzeros.
    """
    W = check_weight_matrix(W)
    B = np.abs(W).reshape(-1, 4)
    b0, b1, b2, b3 = B[:, 0], B[:, 1], B[:, 2], B[:, 3]
    terms = b0 * b1 * b2 + b1 * b2 * b3 + b2 * b3 * b0 + b3 * b0 * b1
    return float(terms.sum())


def _guard(W0: np.ndarray, epsilon: float) -> np.ndarray:
    # Denominator guard w0 + eps*sgn(w0) with the symmetric convention
    # sgn(0) = +1, so the guard never vanishes.
    return W0 + epsilon * np.where(W0 >= 0.0, 1.0, -1.0)


def regw0_value(W, W0, epsilon: float = 1e-8) -> float:
    """Weighted pull toward the pretrained weights.

    Returns sum of ((w / (w0 + eps*sgn(w0))) * (w - w0))^2 over all
    coordinates. Zero iff W agrees with W0 wherever W is nonzero, i.e. the
    surviving weights are unchanged from pretraining.
    """
    W = check_weight_matrix(W)
    W0 = check_weight_matrix(W0, name="W0")
    if W.shape != W0.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W0.shape}")
    r = (W / _guard(W0, epsilon)) * (W - W0)
    return float((r * r).sum())


def regw0_grad(W, W0, epsilon: float = 1e-8) -> np.ndarray:
    """Coordinatewise gradient of :func:`regw0_value` in ``W``.

    d/dw [ (w(w-w0)/d)^2 ] = 2 * (w(w-w0)/d) * ((2w - w0)/d),  d = w0 + eps*sgn(w0).
    Vanishes at W = W0 and at W = 0.
    """
    W = check_weight_matrix(W)
    W0 = check_weight_matrix(W0, name="W0")
    if W.shape != W0.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W0.shape}")
    d = _guard(W0, epsilon)
    return 2.0 * (W * (W - W0) / d) * ((2.0 * W - W0) / d)


def _alm_batch(Z: np.ndarray, lam, eps: float, max_iters: int, sparsity: int):
    # Batched cyclic coordinate minimization over rows of sorted magnitudes.
    # Mirrors blocks.alm exactly (same update and stopping expressions, same
    # association order); converged rows freeze so every row reproduces the
    # scalar trajectory bit for bit.
    n = Z.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n,))
    W = Z.copy()
    if sparsity == 3:
        W[:, 3] = 0.0
    conv = np.zeros(n, dtype=bool)
    sweeps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    for _ in range(max_iters):
        Za = Z[active]
        la = lam[active]
        w0, w1, w2, w3 = (W[active, j].copy() for j in range(4))
        p0, p1, p2, p3 = w0.copy(), w1.copy(), w2.copy(), w3.copy()
        if sparsity == 4:
            w0 = np.maximum(Za[:, 0] - la * (w1 * w2 + w2 * w3 + w3 * w1), 0.0)
            w1 = np.maximum(Za[:, 1] - la * (w0 * w2 + w2 * w3 + w3 * w0), 0.0)
            w2 = np.maximum(Za[:, 2] - la * (w0 * w1 + w1 * w3 + w3 * w0), 0.0)
            w3 = np.maximum(Za[:, 3] - la * (w0 * w1 + w1 * w2 + w2 * w0), 0.0)
        else:
            w0 = np.maximum(Za[:, 0] - la * (w1 * w2), 0.0)
            w1 = np.maximum(Za[:, 1] - la * (w0 * w2), 0.0)
            w2 = np.maximum(Za[:, 2] - la * (w0 * w1), 0.0)
        W[active, 0] = w0
        W[active, 1] = w1
        W[active, 2] = w2
        W[active, 3] = w3
        sweeps[active] += 1
        d0 = w0 - p0
        d1 = w1 - p1
        d2 = w2 - p2
        d3 = w3 - p3
        done = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3) <= eps
        conv[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
    return W, sweeps, conv


def _sorted_objective_rows(W: np.ndarray, Z: np.ndarray, lam) -> np.ndarray:
    # Same association order as blocks._sorted_objective.
    d0 = W[:, 0] - Z[:, 0]
    d1 = W[:, 1] - Z[:, 1]
    d2 = W[:, 2] - Z[:, 2]
    d3 = W[:, 3] - Z[:, 3]
    quad = 0.5 * (d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3)
    w0, w1, w2, w3 = W[:, 0], W[:, 1], W[:, 2], W[:, 3]
    reg = w0 * w1 * w2 + w1 * w2 * w3 + w2 * w3 * w0 + w3 * w0 * w1
    return quad + lam * reg


def prox_map(W, lambda1: float, params: ProxParams | None = None):
    """Blockwise proximal map of the 2:4 regularizer over a whole matrix.

    Applies the exact block solve (candidate enumeration + coordinate
    minimization) independently to every aligned 4-block of ``W`` with
    strength ``lambda1``. Block independence is exact: each block's output
    depends only on that block's input.

    Parameters
    ----------
    W : array-like, shape (rows, cols), cols divisible by 4
        Input matrix.
    lambda1 : float
        Prox strength, >= 0.
    params : ProxParams, optional
        Tolerance and sweep cap for the inner solves. ``params.lam`` is
        ignored in favor of ``lambda1``. Defaults to the training-loop
        tolerance 1e-6.

    Returns
    -------
    W_new : ndarray
        Blockwise proximal map of ``W``; zeros are exact.
    n_unconverged : int
        Number of blocks whose stationary-candidate solves hit the sweep cap.
    """
    W = check_weight_matrix(W)
    if params is None:
        params = ProxParams(lam=float(lambda1), eps=1e-6)
    else:
        params = ProxParams(lam=float(lambda1), eps=params.eps, max_iters=params.max_iters)
    lam = params.lam
    shape = W.shape
    B = W.reshape(-1, 4)
    signs = np.where(B >= 0.0, 1.0, -1.0)
    A = np.abs(B)
    order = np.argsort(-A, axis=1, kind="stable")
    Z = np.take_along_axis(A, order, axis=1)

    two = Z.copy()
    two[:, 2] = 0.0
    two[:, 3] = 0.0
    three, _, conv3 = _alm_batch(Z, lam, params.eps, params.max_iters, sparsity=3)
    dense, _, conv4 = _alm_batch(Z, lam, params.eps, params.max_iters, sparsity=4)

    objs = np.stack(
        [
            _sorted_objective_rows(two, Z, lam),
            _sorted_objective_rows(three, Z, lam),
            _sorted_objective_rows(dense, Z, lam),
        ]
    )
    pick = np.argmin(objs, axis=0)  # ties resolve to the sparser candidate
    stacked = np.stack([two, three, dense])
    W_sorted = stacked[pick, np.arange(B.shape[0])]

    # Z[i, j] came from column order[i, j], so scattering through the same
    # permutation restores the original layout.
    out = np.empty_like(W_sorted)
    np.put_along_axis(out, order, W_sorted, axis=1)
    result = (signs * out).reshape(shape)
    n_unconverged = int(np.count_nonzero(~(conv3 & conv4)))
    return result, n_unconverged


def project_24(W) -> np.ndarray:
    """Magnitude projection mask: keep the 2 largest-|w| entries per 4-block.

    Ties break toward the lower column index. The result is always 2:4-valid.
    """
    W = check_weight_matrix(W)
    B = np.abs(W).reshape(-1, 4)
    order = np.argsort(-B, axis=1, kind="stable")
    mask = np.zeros(B.shape, dtype=bool)
    np.put_along_axis(mask, order[:, :2], True, axis=1)
    return mask.reshape(W.shape)


def apply_mask_snap(W0, M) -> np.ndarray:
    """Snap to pretrained values: W0 on the mask support, exact zeros off it."""
    W0 = check_weight_matrix(W0, name="W0")
    M = check_mask_is_24(M)
    if M.shape != W0.shape:
        raise ValueError(f"mask shape {M.shape} does not match weights {W0.shape}")
    return np.where(M, W0, 0.0)


def sparsity_ratio_24(W, tol: float = 0.0) -> float:
    """Fraction of 4-blocks with at most 2 entries of magnitude > ``tol``.

    Use the default tol=0 on post-prox tensors (zeros there are exact) and a
    small positive tol (1e-8) for mid-training snapshots taken between the
    gradient and prox steps.
    """
    W = check_weight_matrix(W)
    counts = (np.abs(W).reshape(-1, 4) > tol).sum(axis=1)
    return float((counts <= 2).mean())


def mask_similarity(a, b) -> float:
    """Fraction of positions where two masks agree."""
    a = check_mask(a, name="a")
    b = check_mask(b, shape=a.shape, name="b")
    return float((a == b).mean())


def relative_norm_gap(W, W0, M) -> float:
    """Drift of retained weights: ||(W - W0) o M||_F / ||W0 o M||_F."""
    W = check_weight_matrix(W)
    W0 = check_weight_matrix(W0, name="W0")
    M = check_mask(M, shape=W.shape)
    if W.shape != W0.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W0.shape}")
    denom = float(np.linalg.norm(W0 * M))
    if denom == 0.0:
        raise ValueError("relative norm gap undefined: ||W0 o M|| is zero")
    return float(np.linalg.norm((W - W0) * M)) / denom
