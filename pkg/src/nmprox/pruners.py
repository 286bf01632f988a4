"""Sklearn-style pruning estimators.

Each estimator wraps a dense :class:`~nmprox.models.ToyModel` and learns (or
directly computes) a 2:4 mask for every layer. After ``fit``, the fitted
attributes are ``masks_`` (list of 2:4-valid boolean masks), ``model_`` (the
pruned model: pretrained weights on the mask support, exact zeros
elsewhere), and ``predict`` runs the pruned model. Estimators follow the
usual conventions: constructor arguments are stored verbatim,
``get_params``/``set_params`` work with :func:`sklearn.base.clone`, and all
validation happens in ``fit``.

``fit(X, y=None)`` defaults the targets to the dense model's own outputs on
``X``, which is the standard pruning objective (preserve the dense model's
behavior on calibration data).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import activation_col_norms, magnitude_24, wanda_24
from .models import CalibSet, ToyModel, evaluate_mse
from .tensor_ops import apply_mask_snap
from .trainer import ARM_SOFT_BOTH, OPTIMIZER_ADAMW, run_training

__all__ = ["MagnitudePruner", "ActivationWeightedPruner", "ProxGradientPruner"]


class _BasePruner(BaseEstimator):
    """Shared plumbing: model validation, prediction, scoring."""

    def __init__(self, model: ToyModel | None = None):
        self.model = model

    def _checked_model(self) -> ToyModel:
        if not isinstance(self.model, ToyModel):
            raise ValueError("model must be a ToyModel instance; got "
                             f"{type(self.model).__name__}")
        return self.model

    def _check_X(self, X, model: ToyModel) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != model.in_dim:
            raise ValueError(
                f"X has {X.shape[1]} features, model expects {model.in_dim}"
            )
        return X

    def predict(self, X) -> np.ndarray:
        """Outputs of the pruned model."""
        check_is_fitted(self, "model_")
        return self.model_.forward(self._check_X(X, self.model_))

    def score(self, X, y) -> float:
        """Negative mean-squared error of the pruned model (higher is better)."""
        check_is_fitted(self, "model_")
        X = self._check_X(X, self.model_)
        y = check_array(y, dtype=np.float64)
        return -evaluate_mse(self.model_, X, y)


class MagnitudePruner(_BasePruner):
    """Per-block top-2 magnitude mask of the pretrained weights.

    Needs no calibration data: ``fit()`` accepts and ignores ``X``/``y``.
    """

    def fit(self, X=None, y=None) -> "MagnitudePruner":
        model = self._checked_model()
        self.masks_ = [magnitude_24(W) for W in model.layers]
        self.model_ = model.with_layers(
            [apply_mask_snap(W, M) for W, M in zip(model.layers, self.masks_)]
        )
        self.n_features_in_ = model.in_dim
        return self


class ActivationWeightedPruner(_BasePruner):
    """Activation-weighted 2:4 mask (weight magnitude times input norm).

    Column norms come from the calibration inputs for the first layer and,
    for the 2-layer model, from the dense model's hidden activations for the
    second layer.
    """

    def fit(self, X, y=None) -> "ActivationWeightedPruner":
        model = self._checked_model()
        X = self._check_X(X, model)
        layer_inputs = [X]
        if len(model.layers) == 2:
            layer_inputs.append(model.hidden(X))
        self.col_norms_ = [activation_col_norms(Z) for Z in layer_inputs]
        self.masks_ = [
            wanda_24(W, norms) for W, norms in zip(model.layers, self.col_norms_)
        ]
        self.model_ = model.with_layers(
            [apply_mask_snap(W, M) for W, M in zip(model.layers, self.masks_)]
        )
        self.n_features_in_ = model.in_dim
        return self


class ProxGradientPruner(_BasePruner):
    """Learns the 2:4 mask by proximal gradient descent on calibration data.

    Runs the soft-regularized training loop (see :mod:`nmprox.trainer`) from
    the dense weights, then projects to a 2:4 mask and snaps survivors back
    to their exact pretrained values. ``fit(X)`` uses the dense model's own
    outputs as targets unless ``y`` is given.

    Parameters mirror :func:`nmprox.trainer.run_training`; the defaults are
    tuned for the bundled 64-input teacher-student tasks.

    Attributes after fit: ``masks_``, ``model_``, ``history_`` (metrics
    snapshots), ``early_masks_`` (2:4 projection at 10% of training),
    ``final_iterate_`` (pre-projection weights), ``unconverged_prox_blocks_``,
    ``total_steps_``.
    """

    def __init__(
        self,
        model: ToyModel | None = None,
        lambda1: float = 0.3,
        lambda2: float = 0.003,
        peak_lr: float = 0.03,
        warmup_ratio: float = 0.1,
        epochs: int = 40,
        batch_size: int = 32,
        seed: int = 0,
        optimizer: str = OPTIMIZER_ADAMW,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps_opt: float = 1e-8,
        decoupled_decay: float = 0.0,
        prox_eps: float = 1e-6,
        prox_max_iters: int = 100_000,
        snapshot_every: int = 10,
        scale_prox_by_lr: bool = False,
        arm: str = ARM_SOFT_BOTH,
        divergence_factor: float = 1e6,
        regw0_epsilon: float = 1e-8,
    ):
        super().__init__(model=model)
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.peak_lr = peak_lr
        self.warmup_ratio = warmup_ratio
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_opt = eps_opt
        self.decoupled_decay = decoupled_decay
        self.prox_eps = prox_eps
        self.prox_max_iters = prox_max_iters
        self.snapshot_every = snapshot_every
        self.scale_prox_by_lr = scale_prox_by_lr
        self.arm = arm
        self.divergence_factor = divergence_factor
        self.regw0_epsilon = regw0_epsilon

    def fit(self, X, y=None) -> "ProxGradientPruner":
        model = self._checked_model()
        X = self._check_X(X, model)
        if y is None:
            y = model.forward(X)
        else:
            y = check_array(y, dtype=np.float64)
            if y.shape != (X.shape[0], model.out_dim):
                raise ValueError(
                    f"y has shape {y.shape}, expected {(X.shape[0], model.out_dim)}"
                )
        calib = CalibSet(inputs=X, targets=y, seed=self.seed)
        result = run_training(
            model,
            calib,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            peak_lr=self.peak_lr,
            warmup_ratio=self.warmup_ratio,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_opt=self.eps_opt,
            decoupled_decay=self.decoupled_decay,
            prox_eps=self.prox_eps,
            prox_max_iters=self.prox_max_iters,
            snapshot_every=self.snapshot_every,
            scale_prox_by_lr=self.scale_prox_by_lr,
            arm=self.arm,
            divergence_factor=self.divergence_factor,
            regw0_epsilon=self.regw0_epsilon,
        )
        self.result_ = result
        self.masks_ = result.mask
        self.model_ = result.model
        self.history_ = result.history
        self.early_masks_ = result.early_masks
        self.final_iterate_ = result.final_iterate
        self.unconverged_prox_blocks_ = result.unconverged_prox_blocks
        self.total_steps_ = result.total_steps
        self.n_features_in_ = model.in_dim
        return self
