"""Solver benchmark and regularization-path engines.

The benchmark draws seeded random blocks, runs the three solvers (candidate
enumeration with coordinate minimization, the projected-gradient variant,
and the brute-force oracle) across a log-spaced strength grid, and reports
per-solver wall time plus the worst objective gap against the oracle.
Timing wraps each solver's full sweep with a monotonic clock, after one
discarded warmup solve per solver; instance generation is excluded.

The regularization path runs the production solver along the grid for a
single block, emitting solution coordinates per strength plus the closed
form 2-sparse stationarity threshold.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blocks import ProxParams, enum_alm, enum_pgd, kkt_2sparse_threshold, SortedBlock
from .oracle import oracle_prox_sweep
from .validation import check_block4

__all__ = [
    "SOLVERS",
    "BenchRow",
    "SolverStats",
    "BenchReport",
    "PathRow",
    "make_workload",
    "lambda_grid",
    "run_solver_bench",
    "run_reg_path",
]

SOLVER_ALM = "enum_alm"
SOLVER_PGD = "enum_pgd"
SOLVER_ORACLE = "oracle"
SOLVERS = (SOLVER_ALM, SOLVER_PGD, SOLVER_ORACLE)

BENCH_EPS_ALM = 1e-10


@dataclass(frozen=True)
class BenchRow:
    """One (solver, instance, strength) benchmark record."""

    solver: str
    instance: int
    lam: float
    objective: float
    gap: float
    micros: float
    candidate_kind: str
    iters: int
    converged: bool


@dataclass(frozen=True)
class SolverStats:
    """Per-solver aggregate: wall seconds over the sweep and worst gap."""

    solver: str
    seconds: float
    max_gap: float
    n_rows: int
    n_unconverged: int


@dataclass(frozen=True)
class BenchReport:
    """Benchmark outcome; gaps are objective differences vs the oracle."""

    stats: list[SolverStats]
    n_instances: int
    n_lambdas: int
    lam_lo: float
    lam_hi: float
    seed: int
    parallel: bool

    def stat(self, solver: str) -> SolverStats:
        for s in self.stats:
            if s.solver == solver:
                return s
        raise KeyError(solver)


@dataclass(frozen=True)
class PathRow:
    """One strength along a regularization path."""

    lam: float
    w: np.ndarray
    objective: float
    candidate_kind: str
    iters: int
    converged: bool
    nnz: int
    kkt_threshold: float


def make_workload(n_instances: int, seed: int) -> np.ndarray:
    """Seeded standard-normal 4-blocks, one per row."""
    if n_instances < 1:
        raise ValueError(f"n_instances must be >= 1, got {n_instances}")
    return np.random.default_rng(seed).standard_normal((n_instances, 4))


def lambda_grid(n: int = 200, lo: float = 1e-3, hi: float = 10.0) -> np.ndarray:
    """Log-spaced strength grid."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (0.0 < lo <= hi):
        raise ValueError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
    return np.geomspace(lo, hi, n)


def _solve_instance(solver: str, y: np.ndarray, lams: np.ndarray,
                    eps: float, max_iters: int):
    # Solve the full strength sweep for one instance, returning per-row
    # tuples (objective, kind, iters, converged, micros). Oracle timing is
    # amortized over the sweep since it shares grid work across strengths.
    out = []
    if solver == SOLVER_ORACLE:
        t0 = time.perf_counter()
        sols = oracle_prox_sweep(y, lams)
        per = (time.perf_counter() - t0) * 1e6 / len(lams)
        for s in sols:
            out.append((s.objective, s.candidate_kind.value, s.iters, s.converged, per))
        return out
    for lam in lams:
        t0 = time.perf_counter()
        if solver == SOLVER_ALM:
            s = enum_alm(y, ProxParams(lam=float(lam), eps=eps, max_iters=max_iters))
        else:
            s = enum_pgd(y, float(lam), max_iters=max_iters)
        micros = (time.perf_counter() - t0) * 1e6
        out.append((s.objective, s.candidate_kind.value, s.iters, s.converged, micros))
    return out


def run_solver_bench(
    n_instances: int = 100,
    n_lambdas: int = 200,
    lam_lo: float = 1e-3,
    lam_hi: float = 10.0,
    seed: int = 42,
    parallel: bool = False,
    eps_alm: float = BENCH_EPS_ALM,
    max_iters: int = 100_000,
    pgd_max_iters: int = 10_000,
):
    """Run the three-solver benchmark.

    Returns
    -------
    report : BenchReport
    rows : list of BenchRow
        All records, ordered solver-major then instance then strength.
    """
    Y = make_workload(n_instances, seed)
    lams = lambda_grid(n_lambdas, lam_lo, lam_hi)

    per_solver: dict[str, list] = {}
    seconds: dict[str, float] = {}
    for solver in SOLVERS:
        cap = pgd_max_iters if solver == SOLVER_PGD else max_iters
        # One discarded warmup solve before the timer starts.
        _solve_instance(solver, Y[0], lams[:1], eps_alm, cap)
        t0 = time.perf_counter()
        if parallel:
            with ProcessPoolExecutor() as pool:
                results = list(
                    pool.map(
                        _solve_instance,
                        [solver] * n_instances,
                        list(Y),
                        [lams] * n_instances,
                        [eps_alm] * n_instances,
                        [cap] * n_instances,
                    )
                )
        else:
            results = [_solve_instance(solver, y, lams, eps_alm, cap) for y in Y]
        seconds[solver] = time.perf_counter() - t0
        per_solver[solver] = results

    oracle_obj = np.array(
        [[rec[0] for rec in inst] for inst in per_solver[SOLVER_ORACLE]]
    )

    rows: list[BenchRow] = []
    stats: list[SolverStats] = []
    for solver in SOLVERS:
        max_gap = -np.inf
        n_unconverged = 0
        for i, inst in enumerate(per_solver[solver]):
            for j, (obj, kind, iters, conv, micros) in enumerate(inst):
                gap = obj - oracle_obj[i, j]
                max_gap = max(max_gap, gap)
                n_unconverged += not conv
                rows.append(
                    BenchRow(
                        solver=solver,
                        instance=i,
                        lam=float(lams[j]),
                        objective=obj,
                        gap=gap,
                        micros=micros,
                        candidate_kind=kind,
                        iters=iters,
                        converged=conv,
                    )
                )
        stats.append(
            SolverStats(
                solver=solver,
                seconds=seconds[solver],
                max_gap=float(max_gap),
                n_rows=n_instances * n_lambdas,
                n_unconverged=n_unconverged,
            )
        )
    report = BenchReport(
        stats=stats,
        n_instances=n_instances,
        n_lambdas=n_lambdas,
        lam_lo=lam_lo,
        lam_hi=lam_hi,
        seed=seed,
        parallel=parallel,
    )
    return report, rows


def run_reg_path(
    y,
    n_lambdas: int = 200,
    lam_lo: float = 1e-3,
    lam_hi: float = 10.0,
    eps_alm: float = BENCH_EPS_ALM,
    max_iters: int = 100_000,
) -> list[PathRow]:
    """Solve one block along the full strength grid (ascending)."""
    y = check_block4(y)
    lams = lambda_grid(n_lambdas, lam_lo, lam_hi)
    sb = SortedBlock.from_vector(y)
    try:
        kkt = kkt_2sparse_threshold(sb.z)
    except ValueError:
        kkt = float("nan")
    rows = []
    for lam in lams:
        s = enum_alm(y, ProxParams(lam=float(lam), eps=eps_alm, max_iters=max_iters))
        rows.append(
            PathRow(
                lam=float(lam),
                w=s.w,
                objective=s.objective,
                candidate_kind=s.candidate_kind.value,
                iters=s.iters,
                converged=s.converged,
                nnz=int(np.count_nonzero(s.w)),
                kkt_threshold=kkt,
            )
        )
    return rows
