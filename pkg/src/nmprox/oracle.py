"""Brute-force reference solver for the blockwise proximal problem.

Independent audit route for :func:`nmprox.blocks.enum_alm`: instead of the
sorted three-candidate reduction, this solver enumerates all 16 supports of
the 4-block in the original (unsorted) coordinates. On each support the
magnitudes minimize

    0.5 * sum_{i in T} (v_i - |y_i|)^2  +  0.5 * sum_{i not in T} y_i^2
        + lam * reg24 restricted to T,

over v >= 0. Supports of size <= 2 have a closed form (the regularizer
vanishes, so v = |y| on T). Larger supports are solved by a coarse Cartesian
grid over [0, |y_i|] per active coordinate to bracket the basin, followed by
cyclic coordinate-descent polish from the best few grid points down to a
10^-12 tolerance. The best support wins; ties prefer the sparser support.

The only structure shared with the production solver is the problem
definition itself, so agreement between the two is meaningful evidence of
correctness.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .blocks import CandidateKind, ProxSolution, prox_objective
from .validation import check_block4

__all__ = ["oracle_prox", "oracle_prox_sweep"]

# All 16 supports, sparsest first so strict-improvement comparisons resolve
# ties toward sparser solutions.
_SUPPORTS: list[tuple[int, ...]] = [()]
for _k in (1, 2, 3, 4):
    _SUPPORTS.extend(combinations(range(4), _k))


def _support_reg(V: np.ndarray, k: int) -> np.ndarray:
    # Regularizer restricted to a support of size k, batched over rows of V.
    if k == 3:
        return V[:, 0] * V[:, 1] * V[:, 2]
    return (
        V[:, 0] * V[:, 1] * V[:, 2]
        + V[:, 1] * V[:, 2] * V[:, 3]
        + V[:, 2] * V[:, 3] * V[:, 0]
        + V[:, 3] * V[:, 0] * V[:, 1]
    )


def _coeff(V: np.ndarray, j: int, k: int) -> np.ndarray:
    # Coefficient of coordinate j in the restricted regularizer.
    others = [c for c in range(k) if c != j]
    if k == 3:
        return V[:, others[0]] * V[:, others[1]]
    a, b, c = (V[:, o] for o in others)
    return a * b + b * c + c * a


def _polish(a_T: np.ndarray, lam_rows: np.ndarray, V0: np.ndarray,
            tol: float, max_sweeps: int):
    # Cyclic coordinate descent on the restricted problem, batched over rows
    # with per-row lam. Monotone in the objective; zeros are exact.
    V = V0.copy()
    k = V.shape[1]
    delta = np.full(V.shape[0], np.inf)
    sweeps = 0
    for _ in range(max_sweeps):
        prev = V.copy()
        for j in range(k):
            V[:, j] = np.maximum(a_T[j] - lam_rows * _coeff(V, j, k), 0.0)
        sweeps += 1
        delta = np.sqrt(((V - prev) ** 2).sum(axis=1))
        if np.all(delta <= tol):
            break
    return V, delta <= tol, sweeps


def _grid_axes(a_T: np.ndarray, points: int) -> list[np.ndarray]:
    axes = []
    for ai in a_T:
        if ai == 0.0:
            axes.append(np.zeros(1))
        else:
            axes.append(np.linspace(0.0, ai, points))
    return axes


def oracle_prox_sweep(
    y,
    lambdas,
    grid_points_3: int = 25,
    grid_points_4: int = 17,
    polish_tol: float = 1e-12,
    polish_max_sweeps: int = 10_000,
    n_starts: int = 3,
    lam_chunk: int = 64,
) -> list[ProxSolution]:
    """Solve the blockwise prox problem for one block across many strengths.

    Shares the per-support grid evaluations across the whole ``lambdas``
    sweep, which is what makes auditing a few thousand (block, lam) pairs
    affordable.

    Parameters
    ----------
    y : array-like, shape (4,)
        Input block.
    lambdas : array-like
        Regularization strengths, all >= 0.
    grid_points_3, grid_points_4 : int
        Cartesian grid resolution per active coordinate on 3- and 4-supports.
    polish_tol : float
        Coordinate-descent polish tolerance on the per-sweep iterate change.
    polish_max_sweeps : int
        Sweep cap for the polish.
    n_starts : int
        Number of lowest grid points polished per (support, lam).
    lam_chunk : int
        Internal chunk size over lambdas for the grid argmin.

    Returns
    -------
    list of ProxSolution
        One solution per entry of ``lambdas``, in order.
    """
    y = check_block4(y)
    lams = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lambdas must be a non-empty 1-D array")
    if np.any(~np.isfinite(lams)) or np.any(lams < 0.0):
        raise ValueError("lambdas must be finite and >= 0")

    a = np.abs(y)
    signs = np.where(y >= 0.0, 1.0, -1.0)
    n_lam = lams.size

    best_obj = np.full(n_lam, np.inf)
    best_v = np.zeros((n_lam, 4))
    best_conv = np.ones(n_lam, dtype=bool)
    total_sweeps = 0

    for support in _SUPPORTS:
        k = len(support)
        off = 0.5 * float(sum(a[i] * a[i] for i in range(4) if i not in support))
        if k <= 2:
            obj = off  # regularizer vanishes, v = |y| on the support
            improved = obj < best_obj
            if np.any(improved):
                v_full = np.zeros(4)
                v_full[list(support)] = a[list(support)]
                best_obj[improved] = obj
                best_v[improved] = v_full
                best_conv[improved] = True
            continue

        idx = list(support)
        a_T = a[idx]
        axes = _grid_axes(a_T, grid_points_3 if k == 3 else grid_points_4)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        d = pts - a_T
        q = 0.5 * (d * d).sum(axis=1) + off
        r = _support_reg(pts, k)

        starts = np.empty((n_lam, n_starts), dtype=np.intp)
        n_pick = min(n_starts, pts.shape[0])
        for lo in range(0, n_lam, lam_chunk):
            hi = min(lo + lam_chunk, n_lam)
            grid_obj = q[None, :] + lams[lo:hi, None] * r[None, :]
            if n_pick < n_starts:
                part = np.argsort(grid_obj, axis=1)[:, :n_pick]
                part = np.pad(part, ((0, 0), (0, n_starts - n_pick)), mode="edge")
            else:
                part = np.argpartition(grid_obj, n_pick - 1, axis=1)[:, :n_starts]
            starts[lo:hi] = part

        V0 = pts[starts.ravel()]
        lam_rows = np.repeat(lams, n_starts)
        V, conv, sweeps = _polish(a_T, lam_rows, V0, polish_tol, polish_max_sweeps)
        total_sweeps += sweeps

        dV = V - a_T
        obj_rows = 0.5 * (dV * dV).sum(axis=1) + off + lam_rows * _support_reg(V, k)
        obj_rows = obj_rows.reshape(n_lam, n_starts)
        pick = np.argmin(obj_rows, axis=1)
        rows = np.arange(n_lam)
        obj = obj_rows[rows, pick]
        V_best = V.reshape(n_lam, n_starts, k)[rows, pick]
        conv_best = conv.reshape(n_lam, n_starts)[rows, pick]

        improved = obj < best_obj
        if np.any(improved):
            sel = np.where(improved)[0]
            best_obj[sel] = obj[sel]
            best_v[sel] = 0.0
            best_v[np.ix_(sel, idx)] = V_best[sel]
            best_conv[sel] = conv_best[sel]

    solutions = []
    for i, lam in enumerate(lams):
        w = signs * best_v[i]
        nnz = int(np.count_nonzero(w))
        if nnz <= 2:
            kind = CandidateKind.TWO_SPARSE
        elif nnz == 3:
            kind = CandidateKind.THREE_SPARSE
        else:
            kind = CandidateKind.DENSE
        solutions.append(
            ProxSolution(
                w=w,
                objective=prox_objective(w, y, float(lam)),
                candidate_kind=kind,
                iters=total_sweeps,
                converged=bool(best_conv[i]),
            )
        )
    return solutions


def oracle_prox(y, lam: float, **kwargs) -> ProxSolution:
    """Brute-force blockwise prox for a single strength. See
    :func:`oracle_prox_sweep` for the method and keyword arguments."""
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam >= 0.0):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    return oracle_prox_sweep(y, [float(lam)], **kwargs)[0]
