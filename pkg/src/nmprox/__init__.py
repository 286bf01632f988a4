"""Learning 2:4 sparsity masks via proximal gradient descent.

The package centers on an exact proximal operator for a blockwise
regularizer that vanishes precisely on 2:4-sparse blocks (at most 2 nonzeros
in every aligned group of 4). Around it: full-matrix tensor operations, a
brute-force audit oracle, magnitude and activation-weighted baselines, a
small teacher-student experiment bed, sklearn-style pruning estimators, and
a benchmarking CLI.
"""

from .baselines import activation_col_norms, magnitude_24, wanda_24
from .blocks import (
    CandidateKind,
    ProxParams,
    ProxSolution,
    SortedBlock,
    alm,
    enum_alm,
    enum_pgd,
    kkt_2sparse_threshold,
    prox_objective,
    reg24_block,
    soft_threshold,
)
from .models import CalibSet, ToyModel, evaluate_mse, gen_calibration, gen_teacher
from .oracle import oracle_prox, oracle_prox_sweep
from .pruners import ActivationWeightedPruner, MagnitudePruner, ProxGradientPruner
from .tensor_ops import (
    apply_mask_snap,
    mask_similarity,
    project_24,
    prox_map,
    reg24_total,
    regw0_grad,
    regw0_value,
    relative_norm_gap,
    sparsity_ratio_24,
)
from .trainer import (
    ARM_HARD_BOTH,
    ARM_HARD_FROZEN,
    ARM_HARD_SPARSITY,
    ARM_SOFT_BOTH,
    ARMS,
    DivergenceError,
    MetricsRecord,
    TrainResult,
    run_training,
)

__version__ = "0.1.0"

__all__ = [
    "ARM_HARD_BOTH",
    "ARM_HARD_FROZEN",
    "ARM_HARD_SPARSITY",
    "ARM_SOFT_BOTH",
    "ARMS",
    "ActivationWeightedPruner",
    "CalibSet",
    "CandidateKind",
    "DivergenceError",
    "MagnitudePruner",
    "MetricsRecord",
    "ProxGradientPruner",
    "ProxParams",
    "ProxSolution",
    "SortedBlock",
    "ToyModel",
    "TrainResult",
    "activation_col_norms",
    "alm",
    "apply_mask_snap",
    "enum_alm",
    "enum_pgd",
    "evaluate_mse",
    "gen_calibration",
    "gen_teacher",
    "kkt_2sparse_threshold",
    "magnitude_24",
    "mask_similarity",
    "oracle_prox",
    "oracle_prox_sweep",
    "project_24",
    "prox_map",
    "prox_objective",
    "reg24_block",
    "reg24_total",
    "regw0_grad",
    "regw0_value",
    "relative_norm_gap",
    "run_training",
    "soft_threshold",
    "sparsity_ratio_24",
    "wanda_24",
    "__version__",
]
