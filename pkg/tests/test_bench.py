"""Tests for the solver benchmark and regularization-path engines."""

import numpy as np
import pytest

from nmprox.bench import (
    SOLVERS,
    lambda_grid,
    make_workload,
    run_reg_path,
    run_solver_bench,
)


class TestWorkload:
    def test_make_workload_matches_seeded_rng(self):
        got = make_workload(7, seed=42)
        want = np.random.default_rng(42).standard_normal((7, 4))
        assert np.array_equal(got, want)

    def test_make_workload_shape_and_validation(self):
        assert make_workload(3, seed=0).shape == (3, 4)
        with pytest.raises(ValueError):
            make_workload(0, seed=0)

    def test_lambda_grid_endpoints(self):
        grid = lambda_grid(200, 1e-3, 10.0)
        assert grid.shape == (200,)
        assert np.isclose(grid[0], 1e-3)
        assert np.isclose(grid[-1], 10.0)
        assert np.all(np.diff(grid) > 0)
        # log-spaced: constant ratio
        ratios = grid[1:] / grid[:-1]
        assert np.allclose(ratios, ratios[0])

    def test_lambda_grid_validation(self):
        with pytest.raises(ValueError):
            lambda_grid(0)
        with pytest.raises(ValueError):
            lambda_grid(10, 0.0, 1.0)
        with pytest.raises(ValueError):
            lambda_grid(10, 2.0, 1.0)


@pytest.fixture(scope="module")
def tiny():
    return run_solver_bench(n_instances=4, n_lambdas=6, seed=11)


class TestSolverBench:
    def test_row_count_and_order(self, tiny):
        report, rows = tiny
        assert len(rows) == len(SOLVERS) * 4 * 6
        # solver-major, then instance, then strength
        assert [r.solver for r in rows[:6]] == [SOLVERS[0]] * 6
        assert rows[0].instance == 0 and rows[6].instance == 1
        lams = [r.lam for r in rows[:6]]
        assert lams == sorted(lams)

    def test_gaps_never_beat_oracle(self, tiny):
        _, rows = tiny
        for r in rows:
            assert r.gap >= -1e-9
        oracle_rows = [r for r in rows if r.solver == "oracle"]
        assert all(r.gap == 0.0 for r in oracle_rows)

    def test_stats_coherent(self, tiny):
        report, rows = tiny
        assert report.n_instances == 4 and report.n_lambdas == 6
        assert report.seed == 11 and report.parallel is False
        for solver in SOLVERS:
            st = report.stat(solver)
            assert st.n_rows == 24
            assert st.seconds > 0.0
            worst = max(r.gap for r in rows if r.solver == solver)
            assert st.max_gap == worst
        with pytest.raises(KeyError):
            report.stat("nosuch")

    def test_objectives_finite(self, tiny):
        _, rows = tiny
        for r in rows:
            assert np.isfinite(r.objective)
            assert r.micros >= 0.0
            assert r.candidate_kind in {"dense", "three_sparse", "two_sparse"}

    def test_determinism_of_solutions(self):
        _, rows_a = run_solver_bench(n_instances=2, n_lambdas=4, seed=3)
        _, rows_b = run_solver_bench(n_instances=2, n_lambdas=4, seed=3)
        for a, b in zip(rows_a, rows_b):
            assert a.solver == b.solver and a.instance == b.instance
            assert a.objective == b.objective
            assert a.gap == b.gap


class TestRegPath:
    def test_default_block_path(self):
        y = np.array([1.4, 1.1, 1.0, 0.7])
        rows = run_reg_path(y, n_lambdas=50)
        assert len(rows) == 50
        lams = [r.lam for r in rows]
        assert lams == sorted(lams)
        # strength ~0: solution is essentially y itself
        assert np.allclose(rows[0].w, y, atol=1e-2)
        # kkt threshold column is constant and matches the closed form
        kkts = {r.kkt_threshold for r in rows}
        assert kkts == {1.0 / (1.4 * 1.1)}
        # sparsity is non-increasing along the path for this block
        nnzs = [r.nnz for r in rows]
        assert all(a >= b for a, b in zip(nnzs, nnzs[1:]))
        assert nnzs[0] == 4 and nnzs[-1] == 2

    def test_large_strength_pins_two_sparse(self):
        y = np.array([1.4, 1.1, 1.0, 0.7])
        rows = run_reg_path(y, n_lambdas=40)
        last = rows[-1]
        assert last.candidate_kind == "two_sparse"
        assert np.allclose(last.w, [1.4, 1.1, 0.0, 0.0])

    def test_path_rows_converged(self):
        rows = run_reg_path([0.5, -2.0, 0.1, 1.0], n_lambdas=25)
        for r in rows:
            assert r.converged
            assert r.iters >= 0
            assert np.isfinite(r.objective)
            assert r.nnz == int(np.count_nonzero(r.w))

    def test_rejects_bad_block(self):
        with pytest.raises(ValueError):
            run_reg_path([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            run_reg_path([np.nan, 0.0, 0.0, 0.0])
