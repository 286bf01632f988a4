"""Tests for the mask-learning training loop."""

import math

import numpy as np
import pytest

from nmprox.blocks import ProxParams
from nmprox.models import gen_calibration, gen_teacher
from nmprox.tensor_ops import apply_mask_snap, project_24, prox_map
from nmprox.trainer import (
    ARM_HARD_BOTH,
    ARM_HARD_FROZEN,
    ARM_HARD_SPARSITY,
    ARM_SOFT_BOTH,
    ARMS,
    AdamState,
    DivergenceError,
    apply_arm,
    grad_step,
    lr_at,
    run_training,
)
from nmprox.validation import check_mask_is_24

FAST = dict(lambda1=0.3, lambda2=0.003, peak_lr=0.03, epochs=4, batch_size=16)


def tiny_task(seed=0, dims=(16, 8), n=64):
    teacher = gen_teacher(seed, dims)
    calib = gen_calibration(teacher, seed + 1, n=n)
    return teacher, calib


class TestLrAt:
    def test_zero_at_start(self):
        assert lr_at(0, 100, peak_lr=0.5) == 0.0

    def test_peak_at_warmup_end(self):
        # warmup spans 10 of 100 steps; step 10 is the peak
        assert lr_at(10, 100, peak_lr=0.5) == pytest.approx(0.5, rel=1e-15)

    def test_linear_decay_endpoint(self):
        # last step sits one decay increment above zero
        total, peak = 100, 0.5
        decay_steps = total - 10
        assert lr_at(total - 1, total, peak) == pytest.approx(peak / decay_steps, rel=1e-12)

    def test_monotone_up_then_down(self):
        vals = [lr_at(s, 50, 1.0) for s in range(50)]
        top = int(np.argmax(vals))
        assert all(a <= b for a, b in zip(vals[:top], vals[1:top + 1]))
        assert all(a >= b for a, b in zip(vals[top:], vals[top + 1:]))

    def test_rejects_out_of_range_step(self):
        with pytest.raises(ValueError):
            lr_at(100, 100, 0.5)


class TestAdamState:
    def test_first_direction_is_normalized_gradient(self):
        st = AdamState.like(np.zeros((2, 4)))
        g = np.array([[1.0, -2.0, 0.5, 0.0], [3.0, -1.0, 0.25, -0.125]])
        d = st.direction(g)
        np.testing.assert_allclose(d, g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_bias_correction_keeps_scale(self):
        st = AdamState.like(np.zeros((1, 4)))
        g = np.full((1, 4), 0.7)
        for _ in range(5):
            d = st.direction(g)
        np.testing.assert_allclose(d, np.ones((1, 4)), rtol=1e-6)


class TestGradStep:
    def test_plain_sgd(self):
        W = np.ones((1, 4))
        g = np.full((1, 4), 0.5)
        V = grad_step(W, W, g, lr=0.1)
        np.testing.assert_allclose(V, W - 0.05, rtol=1e-15)

    def test_zero_gradient_identity(self):
        W = np.ones((1, 4))
        V = grad_step(W, W, np.zeros((1, 4)), lr=0.1)
        assert np.array_equal(V, W)

    def test_regw0_vanishes_at_w0(self):
        rng = np.random.default_rng(0)
        W0 = rng.normal(size=(2, 8))
        g = rng.normal(size=(2, 8))
        with_reg = grad_step(W0, W0, g, lr=0.05, lambda2=3.0)
        without = grad_step(W0, W0, g, lr=0.05, lambda2=0.0)
        assert np.array_equal(with_reg, without)

    def test_nonfinite_gradient_raises(self):
        W = np.ones((1, 4))
        g = np.array([[np.nan, 0.0, 0.0, 0.0]])
        with pytest.raises(FloatingPointError):
            grad_step(W, W, g, lr=0.1)


class TestApplyArm:
    def test_soft_both_is_prox(self):
        rng = np.random.default_rng(1)
        V = rng.normal(size=(2, 8))
        W0 = rng.normal(size=(2, 8))
        got, _ = apply_arm(V, W0, ARM_SOFT_BOTH, 0.3, ProxParams(lam=0.3, eps=1e-6))
        expected, _ = prox_map(V, 0.3, ProxParams(lam=0.3, eps=1e-6))
        assert np.array_equal(got, expected)

    def test_hard_sparsity_is_24_valid_every_step(self):
        rng = np.random.default_rng(2)
        V = rng.normal(size=(4, 16))
        W0 = rng.normal(size=(4, 16))
        got, _ = apply_arm(V, W0, ARM_HARD_SPARSITY, 0.3, ProxParams(lam=0.3))
        counts = (got.reshape(-1, 4) != 0.0).sum(axis=1)
        assert np.all(counts <= 2)
        M = project_24(V)
        assert np.array_equal(got, V * M)

    def test_hard_frozen_retained_weights_equal_w0(self):
        # the reset targets the two largest-magnitude entries of the
        # post-prox iterate; those positions carry exact W0 values
        rng = np.random.default_rng(3)
        V = rng.normal(size=(4, 16))
        W0 = rng.normal(size=(4, 16))
        got, _ = apply_arm(V, W0, ARM_HARD_FROZEN, 0.3, ProxParams(lam=0.3))
        pre_reset, _ = prox_map(V, 0.3, ProxParams(lam=0.3))
        M = project_24(pre_reset)
        assert np.array_equal(got[M], W0[M])
        assert np.array_equal(got[~M], pre_reset[~M])

    def test_hard_both_is_24_valid_and_frozen(self):
        rng = np.random.default_rng(4)
        V = rng.normal(size=(4, 16))
        W0 = rng.normal(size=(4, 16))
        got, _ = apply_arm(V, W0, ARM_HARD_BOTH, 0.3, ProxParams(lam=0.3))
        M = project_24(got)
        assert np.array_equal(got[M], W0[M])
        assert np.all(got[~M] == 0.0)

    def test_rejects_unknown_arm(self):
        with pytest.raises(ValueError):
            apply_arm(np.ones((1, 4)), np.ones((1, 4)), "nope", 0.3, ProxParams(lam=0.3))


class TestRunTraining:
    def test_output_contract(self):
        teacher, calib = tiny_task()
        res = run_training(teacher, calib, seed=7, **FAST)
        for M, Wf, W0 in zip(res.mask, res.final_weights, teacher.layers):
            check_mask_is_24(M)
            assert np.array_equal(Wf, apply_mask_snap(W0, M))
            assert np.array_equal(Wf[M], W0[M])
            assert np.all(Wf[~M] == 0.0)
            assert M.sum() * 2 == M.size
        assert res.total_steps == 4 * (64 // 16)

    def test_deterministic_bit_identical(self):
        teacher, calib = tiny_task()
        a = run_training(teacher, calib, seed=7, **FAST)
        b = run_training(teacher, calib, seed=7, **FAST)
        for x, y in zip(a.final_weights, b.final_weights):
            assert np.array_equal(x, y)
        for x, y in zip(a.final_iterate, b.final_iterate):
            assert np.array_equal(x, y)
        assert [r.loss for r in a.history] == [r.loss for r in b.history]

    def test_seed_changes_result(self):
        teacher, calib = tiny_task()
        a = run_training(teacher, calib, seed=7, **FAST)
        b = run_training(teacher, calib, seed=8, **FAST)
        assert any(
            not np.array_equal(x, y)
            for x, y in zip(a.final_iterate, b.final_iterate)
        )

    def test_zero_lr_zero_reg_gives_magnitude_mask(self):
        teacher, calib = tiny_task()
        res = run_training(
            teacher, calib, lambda1=0.0, lambda2=0.0, peak_lr=0.0,
            epochs=4, batch_size=16, seed=7,
        )
        for M, W0 in zip(res.mask, teacher.layers):
            assert np.array_equal(M, project_24(W0))
        for Wi, W0 in zip(res.final_iterate, teacher.layers):
            assert np.array_equal(Wi, W0)

    def test_early_mask_captured_at_tenth_of_training(self):
        teacher, calib = tiny_task()
        res = run_training(teacher, calib, seed=7, **FAST)
        assert res.early_masks is not None
        for M in res.early_masks:
            assert M.dtype == bool

    def test_history_finite_and_ordered(self):
        teacher, calib = tiny_task()
        res = run_training(teacher, calib, seed=7, snapshot_every=3, **FAST)
        steps = [r.step for r in res.history]
        assert steps == sorted(steps)
        assert steps[0] == 1 and steps[-1] == res.total_steps
        for r in res.history:
            for v in (r.loss, r.sparsity_ratio, r.mask_similarity_to_early,
                      r.relative_norm_gap, r.reg24_value, r.regw0_value):
                assert math.isfinite(v)

    def test_divergence_raises_with_history(self):
        # start away from the optimum so gradients are nonzero, then use an
        # absurd learning rate
        teacher, calib = tiny_task()
        rng = np.random.default_rng(9)
        student = teacher.with_layers(
            [W + 0.5 * rng.normal(size=W.shape) for W in teacher.layers]
        )
        with pytest.raises(DivergenceError) as exc:
            run_training(
                student, calib, lambda1=0.0, lambda2=0.0, peak_lr=1e9,
                epochs=20, batch_size=16, seed=7, optimizer="sgd",
            )
        assert isinstance(exc.value.history, list)
        assert exc.value.step >= 1

    def test_mlp2_runs(self):
        teacher, calib = tiny_task(dims=(16, 8, 8))
        res = run_training(teacher, calib, seed=7, **FAST)
        assert len(res.mask) == 2
        for M in res.mask:
            check_mask_is_24(M)

    @pytest.mark.parametrize("arm", ARMS)
    def test_all_arms_produce_valid_output(self, arm):
        teacher, calib = tiny_task()
        res = run_training(teacher, calib, seed=7, arm=arm, **FAST)
        for M, Wf, W0 in zip(res.mask, res.final_weights, teacher.layers):
            check_mask_is_24(M)
            assert np.array_equal(Wf, apply_mask_snap(W0, M))

    def test_scale_prox_by_lr_weakens_prox(self):
        teacher, calib = tiny_task()
        scaled = run_training(teacher, calib, seed=7, scale_prox_by_lr=True, **FAST)
        unscaled = run_training(teacher, calib, seed=7, scale_prox_by_lr=False, **FAST)
        # scaling by lr (max 0.03) makes the effective strength tiny, so the
        # iterate stays much denser before projection
        assert scaled.history[-1].sparsity_ratio < unscaled.history[-1].sparsity_ratio

    def test_rejects_too_small_warmup(self):
        teacher, calib = tiny_task()
        with pytest.raises(ValueError, match="warmup"):
            run_training(
                teacher, calib, lambda1=0.1, peak_lr=0.01, epochs=1,
                batch_size=64, warmup_ratio=0.1, seed=0,
            )

    def test_rejects_batch_larger_than_data(self):
        teacher, calib = tiny_task(n=16)
        with pytest.raises(ValueError, match="batch_size"):
            run_training(
                teacher, calib, lambda1=0.1, peak_lr=0.01, epochs=2,
                batch_size=32, seed=0,
            )

    def test_rejects_unknown_arm_and_optimizer(self):
        teacher, calib = tiny_task()
        with pytest.raises(ValueError, match="arm"):
            run_training(teacher, calib, seed=0, arm="nope", **FAST)
        with pytest.raises(ValueError, match="optimizer"):
            run_training(teacher, calib, seed=0, optimizer="nope", **FAST)
