"""Tests for the sklearn-style pruning estimators and mask baselines."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nmprox.baselines import activation_col_norms, magnitude_24, wanda_24
from nmprox.models import gen_calibration, gen_teacher
from nmprox.pruners import (
    ActivationWeightedPruner,
    MagnitudePruner,
    ProxGradientPruner,
)
from nmprox.tensor_ops import sparsity_ratio_24


def tiny_task(seed=0, dims=(16, 8), n=64):
    teacher = gen_teacher(seed, dims)
    calib = gen_calibration(teacher, seed + 1, n=n)
    return teacher, calib


def assert_pruned_model_valid(pruner, model):
    for M, W, W0 in zip(pruner.masks_, pruner.model_.layers, model.layers):
        assert M.dtype == bool
        assert M.shape == W0.shape
        counts = M.reshape(-1, 4).sum(axis=1)
        assert np.all(counts == 2)
        # survivors keep exact pretrained values, the rest are exact zeros
        assert np.array_equal(W[M], W0[M])
        assert np.all(W[~M] == 0.0)


class TestBaselines:
    def test_magnitude_keeps_top2(self):
        W0 = np.array([[0.1, -3.0, 2.0, 0.5], [1.0, 1.0, -1.0, 4.0]])
        M = magnitude_24(W0)
        # second block has a three-way tie at |1.0|; the stable break keeps
        # the lowest column among the tied entries
        expected = np.array(
            [[False, True, True, False], [True, False, False, True]]
        )
        assert np.array_equal(M, expected)

    def test_wanda_equals_magnitude_under_uniform_norms(self):
        rng = np.random.default_rng(3)
        W0 = rng.normal(size=(8, 16))
        norms = np.full(16, 2.5)
        assert np.array_equal(wanda_24(W0, norms), magnitude_24(W0))

    def test_wanda_reweights_columns(self):
        W0 = np.array([[1.0, 0.9, 0.8, 0.7]])
        norms = np.array([0.01, 0.01, 1.0, 1.0])
        M = wanda_24(W0, norms)
        assert np.array_equal(M, [[False, False, True, True]])

    def test_activation_col_norms_values(self):
        X = np.array([[3.0, 0.0], [4.0, 1.0]])
        norms = activation_col_norms(X)
        assert np.allclose(norms, [5.0, 1.0])

    def test_activation_col_norms_rejects_bad_input(self):
        with pytest.raises(ValueError):
            activation_col_norms(np.ones(4))
        with pytest.raises(ValueError):
            activation_col_norms(np.array([[1.0, np.nan]]))

    def test_wanda_validation(self):
        W0 = np.zeros((2, 8))
        with pytest.raises(ValueError):
            wanda_24(W0, np.ones(7))
        with pytest.raises(ValueError):
            wanda_24(W0, -np.ones(8))
        with pytest.raises(ValueError):
            wanda_24(W0, np.full(8, np.inf))


class TestSklearnProtocol:
    @pytest.mark.parametrize(
        "cls", [MagnitudePruner, ActivationWeightedPruner, ProxGradientPruner]
    )
    def test_get_set_params_and_clone(self, cls):
        teacher, _ = tiny_task()
        est = cls(model=teacher)
        params = est.get_params()
        assert params["model"] is teacher
        # clone deep-copies non-estimator params; the model must carry over
        # by value
        dup = clone(est)
        for Wa, Wb in zip(dup.model.layers, teacher.layers):
            assert np.array_equal(Wa, Wb)
        est.set_params(model=None)
        assert est.model is None

    def test_prox_params_round_trip(self):
        est = ProxGradientPruner(lambda1=0.7, epochs=3, seed=11)
        p = est.get_params()
        assert p["lambda1"] == 0.7 and p["epochs"] == 3 and p["seed"] == 11
        est.set_params(lambda2=0.5)
        assert est.lambda2 == 0.5

    @pytest.mark.parametrize(
        "cls", [MagnitudePruner, ActivationWeightedPruner, ProxGradientPruner]
    )
    def test_predict_before_fit_raises(self, cls):
        teacher, calib = tiny_task()
        with pytest.raises(NotFittedError):
            cls(model=teacher).predict(calib.inputs)

    def test_fit_rejects_non_model(self):
        _, calib = tiny_task()
        with pytest.raises(ValueError, match="ToyModel"):
            MagnitudePruner(model=None).fit(calib.inputs)
        with pytest.raises(ValueError, match="ToyModel"):
            ActivationWeightedPruner(model="dense").fit(calib.inputs)

    def test_fit_rejects_wrong_width(self):
        teacher, _ = tiny_task(dims=(16, 8))
        X_bad = np.zeros((4, 12))
        with pytest.raises(ValueError, match="features"):
            ActivationWeightedPruner(model=teacher).fit(X_bad)

    def test_prox_rejects_mismatched_targets(self):
        teacher, calib = tiny_task()
        y_bad = np.zeros((calib.inputs.shape[0], teacher.out_dim + 1))
        est = ProxGradientPruner(model=teacher, epochs=1)
        with pytest.raises(ValueError, match="shape"):
            est.fit(calib.inputs, y_bad)


class TestMagnitudePruner:
    def test_masks_match_baseline(self):
        teacher, calib = tiny_task()
        est = MagnitudePruner(model=teacher).fit()
        assert len(est.masks_) == len(teacher.layers)
        for M, W0 in zip(est.masks_, teacher.layers):
            assert np.array_equal(M, magnitude_24(W0))
        assert_pruned_model_valid(est, teacher)

    def test_predict_runs_pruned_model(self):
        teacher, calib = tiny_task()
        est = MagnitudePruner(model=teacher).fit()
        got = est.predict(calib.inputs)
        want = est.model_.forward(calib.inputs)
        assert np.array_equal(got, want)
        assert got.shape == (calib.inputs.shape[0], teacher.out_dim)

    def test_score_is_negative_mse(self):
        teacher, calib = tiny_task()
        est = MagnitudePruner(model=teacher).fit()
        s = est.score(calib.inputs, calib.targets)
        assert s <= 0.0
        pred = est.predict(calib.inputs)
        mse = np.mean((pred - calib.targets) ** 2)
        assert np.isclose(s, -mse)


class TestActivationWeightedPruner:
    def test_masks_match_baseline(self):
        teacher, calib = tiny_task()
        est = ActivationWeightedPruner(model=teacher).fit(calib.inputs)
        norms = activation_col_norms(calib.inputs)
        assert np.allclose(est.col_norms_[0], norms)
        assert np.array_equal(est.masks_[0], wanda_24(teacher.layers[0], norms))
        assert_pruned_model_valid(est, teacher)

    def test_two_layer_uses_hidden_activations(self):
        teacher, calib = tiny_task(dims=(16, 12, 8))
        est = ActivationWeightedPruner(model=teacher).fit(calib.inputs)
        assert len(est.col_norms_) == 2
        H = teacher.hidden(calib.inputs)
        assert np.allclose(est.col_norms_[1], activation_col_norms(H))
        assert np.array_equal(
            est.masks_[1], wanda_24(teacher.layers[1], est.col_norms_[1])
        )
        assert_pruned_model_valid(est, teacher)


class TestProxGradientPruner:
    def test_fit_produces_valid_masks(self):
        teacher, calib = tiny_task()
        est = ProxGradientPruner(model=teacher, epochs=4, batch_size=16)
        est.fit(calib.inputs, calib.targets)
        assert_pruned_model_valid(est, teacher)
        for W in est.model_.layers:
            assert sparsity_ratio_24(W) == 1.0
        assert est.total_steps_ == len(range(0, 64, 16)) * 4
        assert len(est.history_) >= 2
        assert len(est.early_masks_) == len(teacher.layers)
        assert len(est.final_iterate_) == len(teacher.layers)

    def test_fit_determinism(self):
        teacher, calib = tiny_task()
        kw = dict(model=teacher, epochs=3, batch_size=16, seed=5)
        a = ProxGradientPruner(**kw).fit(calib.inputs, calib.targets)
        b = ProxGradientPruner(**kw).fit(calib.inputs, calib.targets)
        for Ma, Mb in zip(a.masks_, b.masks_):
            assert np.array_equal(Ma, Mb)
        for Wa, Wb in zip(a.final_iterate_, b.final_iterate_):
            assert np.array_equal(Wa, Wb)

    def test_default_targets_are_dense_outputs(self):
        teacher, calib = tiny_task()
        kw = dict(model=teacher, epochs=3, batch_size=16, seed=5)
        implicit = ProxGradientPruner(**kw).fit(calib.inputs)
        explicit = ProxGradientPruner(**kw).fit(
            calib.inputs, teacher.forward(calib.inputs)
        )
        for Ma, Mb in zip(implicit.masks_, explicit.masks_):
            assert np.array_equal(Ma, Mb)
