"""Exact proximal operator for the blockwise 2:4 sparsity regularizer.

Everything in this module works on a single block ``w`` of 4 weights. The
regularizer is the sum of absolute three-way products

    reg24(w) = |w1 w2 w3| + |w2 w3 w4| + |w3 w4 w1| + |w4 w1 w2|,

which is zero exactly when at most two entries of the block are nonzero, i.e.
when the block already satisfies the 2:4 pattern. The proximal problem

    min_w  0.5 * ||w - y||^2 + lam * reg24(w)

separates over sign and magnitude: the minimizer has the signs of ``y`` and
magnitudes that solve the same problem on z = sort(|y|, descending). On the
sorted nonnegative side the minimizer is one of three candidates:

* the 2-sparse point ``[z1, z2, 0, 0]`` (regularizer vanishes),
* a 3-sparse stationary point of ``0.5||w - z||^2 + lam*w1*w2*w3``,
* a dense stationary point of the full sorted objective.

The stationary candidates are found by cyclic exact coordinate minimization
(:func:`alm`): each coordinate update is a one-sided soft-threshold whose
threshold is ``lam`` times the coefficient multiplying that coordinate in the
regularizer, so exact zeros appear in finitely many sweeps. :func:`enum_alm`
enumerates the three candidates and keeps the best; :func:`enum_pgd` is a
slower projected-gradient reference used for benchmarking.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_block4

__all__ = [
    "CandidateKind",
    "ProxParams",
    "ProxSolution",
    "SortedBlock",
    "reg24_block",
    "soft_threshold",
    "prox_objective",
    "alm",
    "enum_alm",
    "enum_pgd",
    "kkt_2sparse_threshold",
]


class CandidateKind(str, enum.Enum):
    """Which candidate of the blockwise enumeration won."""

    TWO_SPARSE = "two_sparse"
    THREE_SPARSE = "three_sparse"
    DENSE = "dense"


@dataclass(frozen=True)
class ProxParams:
    """Parameters of the blockwise proximal solve.

    Parameters
    ----------
    lam : float
        Regularization strength, must be >= 0.
    eps : float
        Convergence tolerance on the per-sweep iterate change.
    max_iters : int
        Hard cap on coordinate sweeps per stationary-candidate solve.
    """

    lam: float
    eps: float = 1e-10
    max_iters: int = 100_000

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (self.eps > 0.0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and > 0, got {self.eps}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class ProxSolution:
    """Result of a blockwise proximal solve.

    ``objective`` always equals ``prox_objective(w, y, lam)`` for the input
    block ``y``; ``iters`` counts coordinate sweeps (or gradient iterations)
    summed over the stationary-candidate solves; ``converged`` is False when
    any candidate solve hit its iteration cap.
    """

    w: np.ndarray
    objective: float
    candidate_kind: CandidateKind
    iters: int
    converged: bool = True


@dataclass(frozen=True)
class SortedBlock:
    """Sign/magnitude/order decomposition of a 4-block.

    ``z`` holds ``|y|`` sorted descending, ``signs`` the entrywise signs with
    sign(0) = +1, and ``idx`` the rank of each original coordinate, so that
    ``signs * z[idx]`` recovers the original block exactly. Ties in magnitude
    are broken by lower original index (stable sort).
    """

    z: np.ndarray
    signs: np.ndarray
    idx: np.ndarray

    @classmethod
    def from_vector(cls, y) -> "SortedBlock":
        y = check_block4(y)
        a = np.abs(y)
        order = np.argsort(-a, kind="stable")
        idx = np.empty(4, dtype=np.intp)
        idx[order] = np.arange(4)
        signs = np.where(y >= 0.0, 1.0, -1.0)
        return cls(z=a[order], signs=signs, idx=idx)

    def restore(self, w_sorted) -> np.ndarray:
        """Map a sorted-magnitude solution back to the original layout."""
        w_sorted = np.asarray(w_sorted, dtype=np.float64)
        return self.signs * w_sorted[self.idx]


def reg24_block(w) -> float:
    """Blockwise 2:4 regularizer: sum of absolute 3-out-of-4 products."""
    w = check_block4(w)
    a1, a2, a3, a4 = np.abs(w)
    return a1 * a2 * a3 + a2 * a3 * a4 + a3 * a4 * a1 + a4 * a1 * a2


def soft_threshold(z: float, alpha: float) -> float:
    """One-sided soft-threshold max(z - alpha, 0) used by the coordinate updates."""
    v = z - alpha
    return v if v > 0.0 else 0.0


def prox_objective(w, y, lam: float) -> float:
    """Proximal objective 0.5*||w - y||^2 + lam * reg24_block(w)."""
    w = check_block4(w)
    y = check_block4(y)
    d = w - y
    return 0.5 * float(d @ d) + lam * reg24_block(w)


def _sorted_objective(w1, w2, w3, w4, z1, z2, z3, z4, lam):
    # Scalar objective on the sorted nonnegative side. tensor_ops mirrors this
    # expression (same association order) so batched and scalar paths agree
    # bit for bit.
    d1 = w1 - z1
    d2 = w2 - z2
    d3 = w3 - z3
    d4 = w4 - z4
    quad = 0.5 * (d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4)
    reg = w1 * w2 * w3 + w2 * w3 * w4 + w3 * w4 * w1 + w4 * w1 * w2
    return quad + lam * reg


def alm(z, params: ProxParams, sparsity: int, trace: list | None = None):
    """Cyclic exact coordinate minimization on the sorted block problem.

    Minimizes ``0.5*||w - z||^2 + lam*reg`` over nonnegative ``w`` supported on
    the first ``sparsity`` coordinates of the descending-sorted magnitudes
    ``z``. For ``sparsity=4`` the regularizer is the full sum of three-way
    products; for ``sparsity=3`` it is its restriction ``lam*w1*w2*w3``. Each
    coordinate update is the exact minimizer given the others,

        w_i <- max(z_i - lam * c_i(w), 0),

    where ``c_i`` is the coefficient of ``w_i`` in the regularizer (sum of
    pairwise products of the other three coordinates for ``sparsity=4``, the
    product of the other two for ``sparsity=3``). Updates sweep i = 1..S in
    place; the loop stops when the Euclidean change over a full sweep is at
    most ``params.eps`` or after ``params.max_iters`` sweeps.

    Parameters
    ----------
    z : array-like, shape (4,)
        Block magnitudes sorted in descending order, all >= 0.
    params : ProxParams
        Solve parameters (strength, tolerance, sweep cap).
    sparsity : int
        Candidate support size, 3 or 4.
    trace : list, optional
        When given, receives the initial point and the iterate after every
        sweep as length-4 arrays.

    Returns
    -------
    w : ndarray, shape (4,)
        Stationary point; zeros are exact.
    sweeps : int
        Number of full coordinate sweeps performed.
    converged : bool
        False when the sweep cap was reached before the tolerance.
    """
    if sparsity not in (3, 4):
        raise ValueError(f"sparsity must be 3 or 4, got {sparsity}")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (4,):
        raise ValueError(f"expected sorted magnitudes of shape (4,), got {z.shape}")
    if np.any(z < 0.0) or np.any(z[:-1] < z[1:]):
        raise ValueError("z must be nonnegative and sorted in descending order")
    z1, z2, z3, z4 = (float(v) for v in z)
    lam = params.lam
    w1, w2, w3 = z1, z2, z3
    w4 = z4 if sparsity == 4 else 0.0
    if trace is not None:
        trace.append(np.array([w1, w2, w3, w4]))
    sweeps = 0
    for _ in range(params.max_iters):
        p1, p2, p3, p4 = w1, w2, w3, w4
        if sparsity == 4:
            w1 = max(z1 - lam * (w2 * w3 + w3 * w4 + w4 * w2), 0.0)
            w2 = max(z2 - lam * (w1 * w3 + w3 * w4 + w4 * w1), 0.0)
            w3 = max(z3 - lam * (w1 * w2 + w2 * w4 + w4 * w1), 0.0)
            w4 = max(z4 - lam * (w1 * w2 + w2 * w3 + w3 * w1), 0.0)
        else:
            w1 = max(z1 - lam * (w2 * w3), 0.0)
            w2 = max(z2 - lam * (w1 * w3), 0.0)
            w3 = max(z3 - lam * (w1 * w2), 0.0)
        sweeps += 1
        if trace is not None:
            trace.append(np.array([w1, w2, w3, w4]))
        d1 = w1 - p1
        d2 = w2 - p2
        d3 = w3 - p3
        d4 = w4 - p4
        if math.sqrt(d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4) <= params.eps:
            return np.array([w1, w2, w3, w4]), sweeps, True
    return np.array([w1, w2, w3, w4]), sweeps, False


def enum_alm(y, params: ProxParams) -> ProxSolution:
    """Exact blockwise prox via candidate enumeration + coordinate minimization.

    Decomposes ``y`` into signs and sorted magnitudes ``z``, evaluates the
    three candidates (2-sparse truncation, 3-sparse and dense stationary
    points from :func:`alm`), keeps the lowest sorted-side objective (ties go
    to the sparser candidate), and maps the winner back through the stored
    signs and ordering.

    Parameters
    ----------
    y : array-like, shape (4,)
        Input block.
    params : ProxParams
        Solve parameters.

    Returns
    -------
    ProxSolution
        Minimizer, its objective for the original block, the winning
        candidate kind, total sweeps, and a convergence flag.
    """
    sb = SortedBlock.from_vector(y)
    z1, z2, z3, z4 = (float(v) for v in sb.z)
    lam = params.lam

    w3s, it3, conv3 = alm(sb.z, params, sparsity=3)
    w4s, it4, conv4 = alm(sb.z, params, sparsity=4)

    cands = (
        (np.array([z1, z2, 0.0, 0.0]), CandidateKind.TWO_SPARSE),
        (w3s, CandidateKind.THREE_SPARSE),
        (w4s, CandidateKind.DENSE),
    )
    best_w, best_kind = cands[0]
    best_obj = _sorted_objective(*best_w, z1, z2, z3, z4, lam)
    for w, kind in cands[1:]:
        obj = _sorted_objective(*w, z1, z2, z3, z4, lam)
        if obj < best_obj:
            best_w, best_kind, best_obj = w, kind, obj

    w = sb.restore(best_w)
    return ProxSolution(
        w=w,
        objective=prox_objective(w, y, lam),
        candidate_kind=best_kind,
        iters=it3 + it4,
        converged=conv3 and conv4,
    )


def _pgd(z, lam: float, sparsity: int, grad_tol: float, max_iters: int):
    # Projected gradient descent on the sorted-side candidate problem, with
    # the conservative fixed step 1/L, L = 1 + 2*lam*(z1+z2+z3+z4)^2.
    z1, z2, z3, z4 = (float(v) for v in z)
    L = 1.0 + 2.0 * lam * (z1 + z2 + z3 + z4) ** 2
    step = 1.0 / L
    w1, w2, w3 = z1, z2, z3
    w4 = z4 if sparsity == 4 else 0.0
    iters = 0
    for _ in range(max_iters):
        if sparsity == 4:
            g1 = (w1 - z1) + lam * (w2 * w3 + w3 * w4 + w4 * w2)
            g2 = (w2 - z2) + lam * (w1 * w3 + w3 * w4 + w4 * w1)
            g3 = (w3 - z3) + lam * (w1 * w2 + w2 * w4 + w4 * w1)
            g4 = (w4 - z4) + lam * (w1 * w2 + w2 * w3 + w3 * w1)
        else:
            g1 = (w1 - z1) + lam * (w2 * w3)
            g2 = (w2 - z2) + lam * (w1 * w3)
            g3 = (w3 - z3) + lam * (w1 * w2)
            g4 = 0.0
        n1 = max(w1 - step * g1, 0.0)
        n2 = max(w2 - step * g2, 0.0)
        n3 = max(w3 - step * g3, 0.0)
        n4 = max(w4 - step * g4, 0.0) if sparsity == 4 else 0.0
        iters += 1
        d1 = (w1 - n1) / step
        d2 = (w2 - n2) / step
        d3 = (w3 - n3) / step
        d4 = (w4 - n4) / step
        w1, w2, w3, w4 = n1, n2, n3, n4
        if math.sqrt(d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4) < grad_tol:
            return np.array([w1, w2, w3, w4]), iters, True
    return np.array([w1, w2, w3, w4]), iters, False


def enum_pgd(y, lam: float, grad_tol: float = 1e-8, max_iters: int = 10_000) -> ProxSolution:
    """Blockwise prox via the same enumeration with projected gradient solves.

    Reference solver for benchmarking: identical candidate set to
    :func:`enum_alm`, but the 3-sparse and dense candidates are found by
    projected gradient descent with fixed step 1/L,
    L = 1 + 2*lam*(z1+z2+z3+z4)^2, stopping when the projected-gradient norm
    drops below ``grad_tol``.
    """
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    sb = SortedBlock.from_vector(y)
    z1, z2, z3, z4 = (float(v) for v in sb.z)

    w3s, it3, conv3 = _pgd(sb.z, lam, 3, grad_tol, max_iters)
    w4s, it4, conv4 = _pgd(sb.z, lam, 4, grad_tol, max_iters)

    cands = (
        (np.array([z1, z2, 0.0, 0.0]), CandidateKind.TWO_SPARSE),
        (w3s, CandidateKind.THREE_SPARSE),
        (w4s, CandidateKind.DENSE),
    )
    best_w, best_kind = cands[0]
    best_obj = _sorted_objective(*best_w, z1, z2, z3, z4, lam)
    for w, kind in cands[1:]:
        obj = _sorted_objective(*w, z1, z2, z3, z4, lam)
        if obj < best_obj:
            best_w, best_kind, best_obj = w, kind, obj

    w = sb.restore(best_w)
    return ProxSolution(
        w=w,
        objective=prox_objective(w, y, lam),
        candidate_kind=best_kind,
        iters=it3 + it4,
        converged=conv3 and conv4,
    )


def kkt_2sparse_threshold(z) -> float:
    """Critical strength above which the 2-sparse truncation is stationary.

    For sorted magnitudes ``z``, the point [z1, z2, 0, 0] satisfies the
    stationarity conditions of the sorted block problem iff
    ``lam >= z3 / (z1 * z2)``. Raises when z1*z2 == 0 (the threshold is then
    vacuous: the block is already at most 2-dense).
    """
    if isinstance(z, SortedBlock):
        z = z.z
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (4,):
        raise ValueError(f"expected sorted magnitudes of shape (4,), got {z.shape}")
    if np.any(z < 0.0) or np.any(z[:-1] < z[1:]):
        raise ValueError("z must be nonnegative and sorted in descending order")
    denom = float(z[0]) * float(z[1])
    if denom == 0.0:
        raise ValueError("threshold undefined: z1 * z2 == 0")
    return float(z[2]) / denom
