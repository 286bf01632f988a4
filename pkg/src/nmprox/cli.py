"""Command-line interface.

Subcommands:

* ``solver-bench`` - time the three blockwise prox solvers on a seeded
  random workload and report the worst objective gap against the oracle.
* ``reg-path``     - emit the solution path of one block along the strength
  grid as CSV.
* ``train``        - run the mask-learning pipeline on a synthetic
  teacher-student task described by a JSON config; writes metrics, masks,
  snapped weights, a checkpoint, the datasets, and a JSON summary.
* ``eval``         - apply a stored mask to stored dense weights and report
  test MSE plus the structural facts (sparsity ratio, removed fraction).

Exit codes: 0 success, 2 validation error (bad config, bad file, invalid
mask), 3 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .baselines import activation_col_norms, magnitude_24, wanda_24
from .bench import run_reg_path, run_solver_bench
from .models import evaluate_mse, gen_calibration, gen_teacher, KIND_LINEAR, KIND_MLP2, ToyModel
from .serialization import (
    load_calibration_csv,
    load_mask,
    load_weights,
    save_calibration_csv,
    save_checkpoint,
    save_mask,
    save_weights,
    write_metrics_csv,
)
from .tensor_ops import apply_mask_snap, sparsity_ratio_24
from .trainer import ARM_SOFT_BOTH, ARMS, DivergenceError, OPTIMIZER_ADAMW, OPTIMIZERS, run_training
from .validation import check_mask_is_24

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3

DEFAULT_SEED = 42


class ConfigError(ValueError):
    """Invalid training configuration."""


# Flat JSON config schema: key -> (default, caster). Unknown keys are errors.
_CONFIG_SCHEMA: dict[str, tuple] = {
    "model": ("linear", str),
    "in_dim": (64, int),
    "hidden_dim": (64, int),
    "out_dim": (32, int),
    "mixing": ("correlated", lambda v: None if v in (None, "none") else str(v)),
    "n_calib": (400, int),
    "n_test": (2000, int),
    "lambda1": (0.3, float),
    "lambda2": (0.003, float),
    "peak_lr": (0.03, float),
    "warmup_ratio": (0.1, float),
    "epochs": (40, int),
    "batch_size": (32, int),
    "seed": (DEFAULT_SEED, int),
    "optimizer": (OPTIMIZER_ADAMW, str),
    "beta1": (0.9, float),
    "beta2": (0.999, float),
    "eps_opt": (1e-8, float),
    "decoupled_decay": (0.0, float),
    "prox_eps": (1e-6, float),
    "prox_max_iters": (100_000, int),
    "snapshot_every": (10, int),
    "scale_prox_by_lr": (False, bool),
    "arm": (ARM_SOFT_BOTH, str),
    "divergence_factor": (1e6, float),
    "regw0_epsilon": (1e-8, float),
}


def load_config(path, seed_override: int | None = None) -> dict:
    """Parse and validate a flat JSON training config.

    Unknown keys are rejected with the offending key named; JSON syntax
    errors are reported with line/column diagnostics.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"config {path} is not valid JSON: {e.msg} at line {e.lineno} column {e.colno}"
        ) from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object with flat keys")
    unknown = sorted(set(raw) - set(_CONFIG_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = {}
    for key, (default, cast) in _CONFIG_SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = cast(raw[key])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"config key {key!r}: cannot interpret {raw[key]!r}") from e
        else:
            cfg[key] = default
    if cfg["model"] not in (KIND_LINEAR, KIND_MLP2):
        raise ConfigError(f"config key 'model' must be 'linear' or 'mlp2', got {cfg['model']!r}")
    if cfg["mixing"] not in ("correlated", None):
        raise ConfigError(f"config key 'mixing' must be 'correlated' or 'none', got {cfg['mixing']!r}")
    if cfg["arm"] not in ARMS:
        raise ConfigError(f"config key 'arm' must be one of {ARMS}, got {cfg['arm']!r}")
    if cfg["optimizer"] not in OPTIMIZERS:
        raise ConfigError(
            f"config key 'optimizer' must be one of {OPTIMIZERS}, got {cfg['optimizer']!r}"
        )
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solver_bench(args) -> int:
    out = _out_dir(args)
    print(
        f"solver-bench: seed={args.seed} instances={args.instances} "
        f"lambdas={args.lambdas} grid=[{args.lam_lo:g}, {args.lam_hi:g}] "
        f"parallel={args.parallel}"
    )
    report, rows = run_solver_bench(
        n_instances=args.instances,
        n_lambdas=args.lambdas,
        lam_lo=args.lam_lo,
        lam_hi=args.lam_hi,
        seed=args.seed,
        parallel=args.parallel,
    )
    timing_label = "parallel wall seconds" if report.parallel else "wall seconds"
    for s in report.stats:
        print(
            f"  {s.solver:10s} {timing_label}={s.seconds:9.3f}  "
            f"max_gap_vs_oracle={s.max_gap:+.3e}  rows={s.n_rows}  "
            f"unconverged={s.n_unconverged}"
        )
    if report.parallel:
        print("  note: parallel timings are not comparable to serial runs")
    csv_path = out / "bench.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solver", "instance", "lambda", "objective", "gap", "micros"])
        for r in rows:
            writer.writerow(
                [r.solver, r.instance, f"{r.lam:.17g}", f"{r.objective:.17g}",
                 f"{r.gap:.17g}", f"{r.micros:.3f}"]
            )
    report_path = out / "bench_report.json"
    report_path.write_text(
        json.dumps(
            {
                "seed": report.seed,
                "n_instances": report.n_instances,
                "n_lambdas": report.n_lambdas,
                "lam_lo": report.lam_lo,
                "lam_hi": report.lam_hi,
                "parallel": report.parallel,
                "solvers": {
                    s.solver: {
                        "seconds": s.seconds,
                        "max_gap_vs_oracle": s.max_gap,
                        "n_rows": s.n_rows,
                        "n_unconverged": s.n_unconverged,
                    }
                    for s in report.stats
                },
            },
            indent=2,
        )
        + "\n"
    )
    print(f"  wrote {csv_path} and {report_path}")
    return EXIT_OK


def cmd_reg_path(args) -> int:
    out = _out_dir(args)
    try:
        y = [float(v) for v in args.y.split(",")]
    except ValueError as e:
        raise ConfigError(f"--y must be 4 comma-separated reals, got {args.y!r}") from e
    if len(y) != 4:
        raise ConfigError(f"--y must have exactly 4 entries, got {len(y)}")
    print(
        f"reg-path: seed={args.seed} y=[{args.y}] lambdas={args.lambdas} "
        f"grid=[{args.lam_lo:g}, {args.lam_hi:g}]"
    )
    rows = run_reg_path(y, n_lambdas=args.lambdas, lam_lo=args.lam_lo, lam_hi=args.lam_hi)
    csv_path = out / "reg_path.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["lambda", "w1", "w2", "w3", "w4", "objective", "candidate_kind",
             "iters", "converged", "nnz", "kkt_2sparse_threshold"]
        )
        for r in rows:
            writer.writerow(
                [f"{r.lam:.17g}"]
                + [f"{v:.17g}" for v in r.w]
                + [f"{r.objective:.17g}", r.candidate_kind, r.iters,
                   int(r.converged), r.nnz, f"{r.kkt_threshold:.17g}"]
            )
    print(f"  kkt_2sparse_threshold={rows[0].kkt_threshold:.6g}")
    print(f"  wrote {csv_path}")
    return EXIT_OK


def _teacher_dims(cfg) -> tuple:
    if cfg["model"] == KIND_LINEAR:
        return (cfg["in_dim"], cfg["out_dim"])
    return (cfg["in_dim"], cfg["hidden_dim"], cfg["out_dim"])


def cmd_train(args) -> int:
    out = _out_dir(args)
    cfg = load_config(args.config, seed_override=args.seed)
    seed = cfg["seed"]
    print(f"train: seed={seed} model={cfg['model']} arm={cfg['arm']} "
          f"lambda1={cfg['lambda1']:g} lambda2={cfg['lambda2']:g}")

    # Deterministic seed derivation: teacher, calibration, test, shuffling.
    teacher = gen_teacher(seed, _teacher_dims(cfg), mixing=cfg["mixing"])
    calib = gen_calibration(teacher, seed + 1, n=cfg["n_calib"])
    test = gen_calibration(teacher, seed + 2, n=cfg["n_test"])

    result = run_training(
        teacher,
        calib,
        lambda1=cfg["lambda1"],
        lambda2=cfg["lambda2"],
        peak_lr=cfg["peak_lr"],
        warmup_ratio=cfg["warmup_ratio"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=seed + 3,
        optimizer=cfg["optimizer"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        eps_opt=cfg["eps_opt"],
        decoupled_decay=cfg["decoupled_decay"],
        prox_eps=cfg["prox_eps"],
        prox_max_iters=cfg["prox_max_iters"],
        snapshot_every=cfg["snapshot_every"],
        scale_prox_by_lr=cfg["scale_prox_by_lr"],
        arm=cfg["arm"],
        divergence_factor=cfg["divergence_factor"],
        regw0_epsilon=cfg["regw0_epsilon"],
    )

    write_metrics_csv(out / "metrics.csv", result.history)
    for li, (W, M) in enumerate(zip(result.final_weights, result.mask)):
        save_weights(out / f"weights_l{li}.nmpx", W)
        save_mask(out / f"mask_l{li}.nmmk", M)
    save_checkpoint(out / "checkpoint.nmck", result.final_iterate, result.total_steps)
    save_calibration_csv(out / "calib.csv", calib.inputs, calib.targets)
    save_calibration_csv(out / "test.csv", test.inputs, test.targets)

    # Baseline masks from the same pretrained weights and calibration set.
    mag_model = teacher.with_layers(
        [apply_mask_snap(W, magnitude_24(W)) for W in teacher.layers]
    )
    layer_inputs = [calib.inputs]
    if teacher.kind == KIND_MLP2:
        layer_inputs.append(teacher.hidden(calib.inputs))
    wanda_model = teacher.with_layers(
        [
            apply_mask_snap(W, wanda_24(W, activation_col_norms(Z)))
            for W, Z in zip(teacher.layers, layer_inputs)
        ]
    )

    summary = {
        "seed": seed,
        "model": cfg["model"],
        "arm": cfg["arm"],
        "total_steps": result.total_steps,
        "final_loss": result.history[-1].loss,
        "final_sparsity_ratio_pre_projection": result.history[-1].sparsity_ratio,
        "mask_similarity_final_vs_early": result.history[-1].mask_similarity_to_early,
        "unconverged_prox_blocks": result.unconverged_prox_blocks,
        "test_mse_dense": evaluate_mse(teacher, test.inputs, test.targets),
        "test_mse_learned": evaluate_mse(result.model, test.inputs, test.targets),
        "test_mse_magnitude": evaluate_mse(mag_model, test.inputs, test.targets),
        "test_mse_activation": evaluate_mse(wanda_model, test.inputs, test.targets),
        "sparsity_ratio": min(sparsity_ratio_24(W) for W in result.final_weights),
        "removed_fraction": 1.0
        - sum(int(M.sum()) for M in result.mask) / sum(M.size for M in result.mask),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for key in ("test_mse_dense", "test_mse_learned", "test_mse_magnitude", "test_mse_activation"):
        print(f"  {key} = {summary[key]:.6g}")
    print(f"  wrote metrics.csv, masks, weights, checkpoint, datasets, summary.json in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.weights) != len(args.mask):
        raise ConfigError(
            f"need one --mask per --weights, got {len(args.weights)} weights "
            f"and {len(args.mask)} masks"
        )
    layers = [load_weights(p) for p in args.weights]
    masks = [load_mask(p) for p in args.mask]
    for li, M in enumerate(masks):
        check_mask_is_24(M, name=f"mask {args.mask[li]}")
        if M.shape != layers[li].shape:
            raise ConfigError(
                f"mask {args.mask[li]} shape {M.shape} does not match "
                f"weights {args.weights[li]} shape {layers[li].shape}"
            )
    pruned_layers = [apply_mask_snap(W, M) for W, M in zip(layers, masks)]
    kind = KIND_LINEAR if len(layers) == 1 else KIND_MLP2
    model = ToyModel(kind=kind, layers=pruned_layers)
    X, Y = load_calibration_csv(args.testset)
    if X.shape[1] != model.in_dim:
        raise ConfigError(
            f"testset has {X.shape[1]} input columns, model expects {model.in_dim}"
        )
    removed = 1.0 - sum(int(M.sum()) for M in masks) / sum(M.size for M in masks)
    summary = {
        "seed": args.seed,
        "test_mse": evaluate_mse(model, X, Y),
        "sparsity_ratio": min(sparsity_ratio_24(W) for W in pruned_layers),
        "removed_fraction": removed,
        "n_layers": len(layers),
        "n_test": int(X.shape[0]),
    }
    print(f"eval: seed={args.seed}")
    print(json.dumps(summary, indent=2))
    if args.out:
        out = _out_dir(args)
        (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(f"  wrote {out / 'eval.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmprox",
        description="2:4 sparsity mask learning via an exact blockwise proximal operator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bench = sub.add_parser("solver-bench", help="benchmark the blockwise prox solvers")
    p_bench.add_argument("--instances", type=int, default=100)
    p_bench.add_argument("--lambdas", type=int, default=200)
    p_bench.add_argument("--lam-lo", type=float, default=1e-3)
    p_bench.add_argument("--lam-hi", type=float, default=10.0)
    p_bench.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_bench.add_argument("--out", type=str, default=None)
    p_bench.add_argument("--parallel", action="store_true",
                         help="parallelize over instances (timing reported separately)")
    p_bench.set_defaults(func=cmd_solver_bench)

    p_path = sub.add_parser("reg-path", help="solution path of one block along the strength grid")
    p_path.add_argument("--y", type=str, default="1.4,1.1,1.0,0.7",
                        help="4 comma-separated block entries")
    p_path.add_argument("--lambdas", type=int, default=200)
    p_path.add_argument("--lam-lo", type=float, default=1e-3)
    p_path.add_argument("--lam-hi", type=float, default=10.0)
    p_path.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_path.add_argument("--out", type=str, default=None)
    p_path.set_defaults(func=cmd_reg_path)

    p_train = sub.add_parser("train", help="run the mask-learning pipeline from a JSON config")
    p_train.add_argument("--config", type=str, required=True)
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
    p_train.add_argument("--out", type=str, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a stored mask on a test set")
    p_eval.add_argument("--weights", type=str, action="append", required=True,
                        help="dense pretrained weights (repeat per layer)")
    p_eval.add_argument("--mask", type=str, action="append", required=True,
                        help="mask file (repeat per layer)")
    p_eval.add_argument("--testset", type=str, required=True)
    p_eval.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_eval.add_argument("--out", type=str, default=None)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: training diverged: {e} "
              f"({len(e.history)} metric snapshots preserved)", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
