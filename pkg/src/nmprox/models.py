"""Desk-scale teacher-student models and synthetic calibration data.

Two architectures: a single linear map and a 2-layer tanh MLP. Targets are
noiseless teacher outputs, so the dense teacher is the exact global optimum
and pruning quality is measurable as excess test MSE.

Inputs are correlated Gaussians: x = u @ mixing with u ~ N(0, I) and a
seeded symmetric mixing matrix stored on the teacher (unit mean-square
scale, mild condition number). Under correlated inputs the mask that
minimizes test MSE genuinely differs from the per-block magnitude mask, so
mask-learning quality is observable; with isotropic inputs the magnitude
mask is already optimal for the linear student and there is nothing to
learn. Pass ``mixing=None`` to :func:`gen_teacher` for isotropic inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_weight_matrix

__all__ = [
    "ToyModel",
    "CalibSet",
    "gen_teacher",
    "gen_calibration",
    "loss_and_grad",
    "evaluate_mse",
]

KIND_LINEAR = "linear"
KIND_MLP2 = "mlp2"

# Mixing: per-feature scales log-spaced over one decade (normalized below to
# mean-square 1 so coordinates stay unit scale on average) plus AR(1)
# cross-feature correlation. The scale spread is kept exactly on the
# covariance diagonal so feature importance genuinely varies.
_MIXING_SPREAD = (0.3, 3.0)
_MIXING_RHO = 0.45


@dataclass
class ToyModel:
    """A linear or 2-layer tanh network, weights stored as (out, in) matrices.

    ``input_mixing`` is the symmetric square root of the input covariance
    used to draw this model's data (None means isotropic inputs).
    """

    kind: str
    layers: list[np.ndarray]
    input_mixing: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (KIND_LINEAR, KIND_MLP2):
            raise ValueError(f"unknown model kind {self.kind!r}")
        expected = 1 if self.kind == KIND_LINEAR else 2
        if len(self.layers) != expected:
            raise ValueError(f"{self.kind} expects {expected} layers, got {len(self.layers)}")
        self.layers = [check_weight_matrix(W, name=f"layers[{i}]") for i, W in enumerate(self.layers)]
        for a, b in zip(self.layers, self.layers[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(f"layer shapes do not compose: {a.shape} -> {b.shape}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].shape[0]

    def hidden(self, X: np.ndarray) -> np.ndarray:
        """Hidden activations tanh(X @ W1.T); MLP2 only."""
        if self.kind != KIND_MLP2:
            raise ValueError("hidden() is only defined for mlp2 models")
        return np.tanh(X @ self.layers[0].T)

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.kind == KIND_LINEAR:
            return X @ self.layers[0].T
        return self.hidden(X) @ self.layers[1].T

    def with_layers(self, layers) -> "ToyModel":
        """Copy of this model with replaced weights (same kind and mixing)."""
        return ToyModel(kind=self.kind, layers=[np.array(W) for W in layers],
                        input_mixing=self.input_mixing)

    def copy(self) -> "ToyModel":
        return self.with_layers(self.layers)


@dataclass
class CalibSet:
    """Synthetic sample set: inputs, noiseless teacher targets, and the seed."""

    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same sample count")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("calibration data contains non-finite entries")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


def _make_mixing(rng: np.random.Generator, dim: int) -> np.ndarray:
    s = np.geomspace(_MIXING_SPREAD[0], _MIXING_SPREAD[1], dim)
    s = s / np.sqrt(np.mean(s * s))
    idx = np.arange(dim)
    corr = _MIXING_RHO ** np.abs(idx[:, None] - idx[None, :])
    cov = corr * np.outer(s, s)
    evals, evecs = np.linalg.eigh(cov)
    half = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    perm = rng.permutation(dim)
    return half[np.ix_(perm, perm)]


def gen_teacher(seed: int, dims, mixing: str | None = "correlated") -> ToyModel:
    """Draw a dense teacher model, deterministic per seed.

    Parameters
    ----------
    seed : int
        RNG seed; same seed gives bit-identical weights.
    dims : tuple of int
        (in, out) for a linear model, (in, hidden, out) for the MLP.
        Every dimension that serves as a layer input must be divisible by 4.
    mixing : "correlated" or None
        Input distribution attached to the model: seeded correlated Gaussian
        (default) or isotropic when None.

    Returns
    -------
    ToyModel
        Weights i.i.d. normal scaled by 1/sqrt(fan_in).
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) == 2:
        kind = KIND_LINEAR
    elif len(dims) == 3:
        kind = KIND_MLP2
    else:
        raise ValueError(f"dims must be (in, out) or (in, hidden, out), got {dims}")
    if mixing not in ("correlated", None):
        raise ValueError(f"mixing must be 'correlated' or None, got {mixing!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
    input_mixing = _make_mixing(rng, dims[0]) if mixing == "correlated" else None
    return ToyModel(kind=kind, layers=layers, input_mixing=input_mixing)


def gen_calibration(teacher: ToyModel, seed: int, n: int = 400) -> CalibSet:
    """Draw ``n`` samples from the teacher's input distribution with
    noiseless teacher targets. Deterministic per seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, teacher.in_dim))
    if teacher.input_mixing is not None:
        X = X @ teacher.input_mixing
    return CalibSet(inputs=X, targets=teacher.forward(X), seed=seed)


def loss_and_grad(model: ToyModel, X: np.ndarray, Y: np.ndarray):
    """Mean-squared-error loss and its exact gradients in the layer weights.

    Loss is the mean over all n*out_dim output entries. Gradients are
    hand-derived reverse mode for the two fixed architectures.

    Returns
    -------
    loss : float
    grads : list of ndarray
        One gradient per layer, same shapes as ``model.layers``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    n, m = Y.shape
    if model.kind == KIND_LINEAR:
        P = X @ model.layers[0].T
        R = P - Y
        loss = float((R * R).mean())
        dP = (2.0 / (n * m)) * R
        return loss, [dP.T @ X]
    H = model.hidden(X)
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite hidden activations")
    P = H @ model.layers[1].T
    R = P - Y
    loss = float((R * R).mean())
    dP = (2.0 / (n * m)) * R
    g2 = dP.T @ H
    dH = dP @ model.layers[1]
    dA = dH * (1.0 - H * H)  # tanh'
    g1 = dA.T @ X
    return loss, [g1, g2]


def evaluate_mse(model: ToyModel, X: np.ndarray, Y: np.ndarray) -> float:
    """Mean-squared error of the model on a sample set."""
    R = model.forward(X) - np.asarray(Y, dtype=np.float64)
    return float((R * R).mean())
