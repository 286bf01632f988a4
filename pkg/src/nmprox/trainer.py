"""Outer training loop: gradient step, blockwise prox step, final projection.

Each step forms V = W - lr * (g + lambda2 * regw0_grad(W)) (optionally
preconditioned by adaptive moments) and then applies the blockwise proximal
map with strength ``lambda1``. Following the reference procedure, the prox
strength is NOT scaled by the step size; set ``scale_prox_by_lr=True`` for
the textbook proximal-gradient scaling. After the last step the iterate is
projected to a 2:4 mask by magnitude and surviving weights snap back to
their exact pretrained values, so the learned object is the mask alone.

Four constraint arms for ablations:

* ``soft_both``      - plain proximal loop (both constraints soft).
* ``hard_sparsity``  - prox replaced by exact per-step magnitude projection.
* ``hard_frozen``    - after each step, the two largest-magnitude entries
                       per block are reset to their pretrained values.
* ``hard_both``      - both hard constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import ProxParams
from .models import CalibSet, ToyModel, loss_and_grad
from .tensor_ops import (
    apply_mask_snap,
    mask_similarity,
    project_24,
    prox_map,
    reg24_total,
    regw0_grad,
    regw0_value,
)

__all__ = [
    "ARM_SOFT_BOTH",
    "ARM_HARD_SPARSITY",
    "ARM_HARD_FROZEN",
    "ARM_HARD_BOTH",
    "ARMS",
    "OPTIMIZER_SGD",
    "OPTIMIZER_ADAMW",
    "OPTIMIZERS",
    "MetricsRecord",
    "TrainResult",
    "DivergenceError",
    "lr_at",
    "grad_step",
    "AdamState",
    "apply_arm",
    "run_training",
]

ARM_SOFT_BOTH = "soft_both"
ARM_HARD_SPARSITY = "hard_sparsity"
ARM_HARD_FROZEN = "hard_frozen"
ARM_HARD_BOTH = "hard_both"
ARMS = (ARM_SOFT_BOTH, ARM_HARD_SPARSITY, ARM_HARD_FROZEN, ARM_HARD_BOTH)

OPTIMIZER_SGD = "sgd"
OPTIMIZER_ADAMW = "adamw"
OPTIMIZERS = (OPTIMIZER_SGD, OPTIMIZER_ADAMW)


@dataclass(frozen=True)
class MetricsRecord:
    """One diagnostics snapshot; all fields are finite.

    ``mask_similarity_to_early`` is 1.0 (self-similarity) until the early
    reference mask has been captured.
    """

    step: int
    loss: float
    sparsity_ratio: float
    mask_similarity_to_early: float
    relative_norm_gap: float
    reg24_value: float
    regw0_value: float


@dataclass
class TrainResult:
    """Outcome of a training run.

    ``final_weights`` always equals ``apply_mask_snap(W0, mask)`` per layer;
    ``final_iterate`` is the last pre-projection iterate (useful for
    diagnosing how committed the soft solution was); ``early_masks`` is the
    2:4 projection captured at 10% of training.
    """

    final_weights: list[np.ndarray]
    mask: list[np.ndarray]
    history: list[MetricsRecord]
    unconverged_prox_blocks: int
    early_masks: list[np.ndarray]
    final_iterate: list[np.ndarray]
    model: ToyModel
    total_steps: int


class DivergenceError(RuntimeError):
    """Raised when the training loss blows up; carries the partial history."""

    def __init__(self, message: str, history: list[MetricsRecord], step: int):
        super().__init__(message)
        self.history = history
        self.step = step


def lr_at(step: int, total_steps: int, peak_lr: float, warmup_ratio: float = 0.1) -> float:
    """Linear warmup to ``peak_lr`` then linear decay to 0 at ``total_steps``.

    ``step`` is 0-based; lr_at(0) = 0 and the warmup ends exactly at
    ``round(warmup_ratio * total_steps)`` steps with value ``peak_lr``.
    """
    if not 0 <= step < total_steps:
        raise ValueError(f"step must be in [0, {total_steps}), got {step}")
    warmup = int(round(warmup_ratio * total_steps))
    if step < warmup:
        return peak_lr * step / warmup
    denom = total_steps - warmup
    if denom <= 0:
        return peak_lr
    return peak_lr * (total_steps - step) / denom


@dataclass
class AdamState:
    """Per-layer first/second moment accumulators with bias correction."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, W: np.ndarray, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(W), v=np.zeros_like(W),
                   beta1=beta1, beta2=beta2, eps=eps)

    def direction(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (g * g)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def grad_step(W, W0, grad_loss, lr: float, lambda2: float = 0.0,
              regw0_epsilon: float = 1e-8, opt_state: AdamState | None = None,
              decoupled_decay: float = 0.0) -> np.ndarray:
    """One smooth update V = W - lr * precond(g + lambda2 * regw0_grad(W)).

    With ``opt_state`` given, the full regularized gradient is preconditioned
    by adaptive moments (the prox handles the sparsity regularizer
    separately); decoupled weight decay, when nonzero, is applied outside the
    preconditioner.
    """
    if not np.all(np.isfinite(grad_loss)):
        raise FloatingPointError("non-finite loss gradient")
    g = grad_loss
    if lambda2 != 0.0:
        g = g + lambda2 * regw0_grad(W, W0, epsilon=regw0_epsilon)
    if opt_state is not None:
        step_dir = opt_state.direction(g)
        V = W - lr * step_dir
        if decoupled_decay != 0.0:
            V = V - lr * decoupled_decay * W
        return V
    return W - lr * g


def apply_arm(V, W0, arm: str, lambda1: float, prox_params: ProxParams):
    """Apply one constraint-arm update to the post-gradient iterate ``V``.

    Returns the new iterate and the number of unconverged prox blocks.
    Soft arms run the blockwise prox; hard-sparsity arms replace it with
    exact magnitude projection; frozen arms then reset the two
    largest-magnitude entries per block to their pretrained values.
    """
    if arm not in ARMS:
        raise ValueError(f"arm must be one of {ARMS}, got {arm!r}")
    n_unc = 0
    if arm in (ARM_SOFT_BOTH, ARM_HARD_FROZEN):
        W, n_unc = prox_map(V, lambda1, prox_params)
    else:
        W = V * project_24(V)
    if arm in (ARM_HARD_FROZEN, ARM_HARD_BOTH):
        W = np.where(project_24(W), W0, W)
    return W, n_unc


def run_training(
    model0: ToyModel,
    calib: CalibSet,
    lambda1: float,
    peak_lr: float,
    epochs: int,
    lambda2: float = 0.0,
    warmup_ratio: float = 0.1,
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
) -> TrainResult:
    """Learn a 2:4 mask for ``model0`` on the calibration set.

    Deterministic: identical arguments (including seed) give a bit-identical
    result. Raises :class:`DivergenceError` (history preserved) if the batch
    loss becomes non-finite or exceeds ``divergence_factor`` times the
    reference scale max(initial loss, mean squared target).

    Returns
    -------
    TrainResult
        Mask (2:4-valid), snapped final weights (exactly W0 on the mask
        support), metrics history, and diagnostics.
    """
    if arm not in ARMS:
        raise ValueError(f"arm must be one of {ARMS}, got {arm!r}")
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {optimizer!r}")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if calib.n_samples < batch_size:
        raise ValueError(
            f"calibration set has {calib.n_samples} samples < batch_size {batch_size}"
        )
    if not (lambda1 >= 0.0 and lambda2 >= 0.0 and peak_lr >= 0.0):
        raise ValueError("need lambda1 >= 0, lambda2 >= 0, peak_lr >= 0")
    if not 0.0 <= warmup_ratio <= 1.0:
        raise ValueError(f"warmup_ratio must be in [0, 1], got {warmup_ratio}")

    X, Y = calib.inputs, calib.targets
    n = calib.n_samples
    n_batches = max(1, n // batch_size)
    total_steps = epochs * n_batches
    if warmup_ratio * total_steps < 1.0:
        raise ValueError(
            f"warmup_ratio * total_steps = {warmup_ratio * total_steps:.3g} < 1; "
            "increase epochs or warmup_ratio"
        )
    early_step = max(1, math.ceil(0.1 * total_steps))

    W0 = [W.copy() for W in model0.layers]
    W = [W.copy() for W in model0.layers]
    prox_params = ProxParams(lam=lambda1, eps=prox_eps, max_iters=prox_max_iters)
    states = None
    if optimizer == OPTIMIZER_ADAMW:
        states = [AdamState.like(Wi, beta1=beta1, beta2=beta2, eps=eps_opt) for Wi in W]

    initial_loss, _ = loss_and_grad(model0, X, Y)
    loss_ref = max(initial_loss, float((Y * Y).mean()), 1e-12)

    rng = np.random.default_rng(seed)
    history: list[MetricsRecord] = []
    early_masks: list[np.ndarray] | None = None
    unconverged = 0

    def record(step_1based: int, batch_loss: float) -> None:
        n_blocks = 0
        n_sparse = 0
        agree = 0
        total_bits = 0
        drift_sq = 0.0
        base_sq = 0.0
        r24 = 0.0
        rw0 = 0.0
        for li, Wi in enumerate(W):
            counts = (np.abs(Wi).reshape(-1, 4) > 0.0).sum(axis=1)
            n_blocks += counts.size
            n_sparse += int((counts <= 2).sum())
            Mi = project_24(Wi)
            if early_masks is not None:
                agree += int((Mi == early_masks[li]).sum())
            else:
                agree += Mi.size
            total_bits += Mi.size
            drift_sq += float((((Wi - W0[li]) * Mi) ** 2).sum())
            base_sq += float(((W0[li] * Mi) ** 2).sum())
            r24 += reg24_total(Wi)
            rw0 += regw0_value(Wi, W0[li], epsilon=regw0_epsilon)
        history.append(
            MetricsRecord(
                step=step_1based,
                loss=batch_loss,
                sparsity_ratio=n_sparse / n_blocks,
                mask_similarity_to_early=agree / total_bits,
                relative_norm_gap=math.sqrt(drift_sq / base_sq) if base_sq > 0 else 0.0,
                reg24_value=r24,
                regw0_value=rw0,
            )
        )

    step = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for b in range(n_batches):
            idx = perm[b * batch_size:(b + 1) * batch_size]
            batch_loss, grads = loss_and_grad(model0.with_layers(W), X[idx], Y[idx])
            if not math.isfinite(batch_loss) or batch_loss > divergence_factor * loss_ref:
                raise DivergenceError(
                    f"loss {batch_loss:.6g} diverged at step {step + 1} "
                    f"(reference scale {loss_ref:.6g})",
                    history=history,
                    step=step + 1,
                )
            lr = lr_at(step, total_steps, peak_lr, warmup_ratio)
            V = [
                grad_step(
                    W[li], W0[li], grads[li], lr, lambda2=lambda2,
                    regw0_epsilon=regw0_epsilon,
                    opt_state=states[li] if states is not None else None,
                    decoupled_decay=decoupled_decay,
                )
                for li in range(len(W))
            ]
            lam_eff = lambda1 * lr if scale_prox_by_lr else lambda1
            W = []
            for li, Vi in enumerate(V):
                Wi, n_unc = apply_arm(Vi, W0[li], arm, lam_eff, prox_params)
                unconverged += n_unc
                W.append(Wi)
            step += 1
            if step == early_step:
                early_masks = [project_24(Wi) for Wi in W]
            if step == 1 or step % snapshot_every == 0 or step == total_steps:
                record(step, batch_loss)

    mask = [project_24(Wi) for Wi in W]
    final_weights = [apply_mask_snap(W0[li], mask[li]) for li in range(len(W))]
    return TrainResult(
        final_weights=final_weights,
        mask=mask,
        history=history,
        unconverged_prox_blocks=unconverged,
        early_masks=early_masks if early_masks is not None else [m.copy() for m in mask],
        final_iterate=[Wi.copy() for Wi in W],
        model=model0.with_layers(final_weights),
        total_steps=total_steps,
    )
