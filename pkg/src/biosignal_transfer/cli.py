from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv

from biosignal_transfer.config.paths import (
    FOLD_LOGS_NAME,
    PROJECT_ROOT,
    RUN_CONFIG_NAME,
    SYNTHETIC_DIR,
    run_directory,
)
from biosignal_transfer.config.run_config import (
    ConfigError,
    RunConfig,
    parse_override,
    resolve_run_config,
)
from biosignal_transfer.config.settings import get_settings
from biosignal_transfer.data.loader import load_dataset, write_dataset
from biosignal_transfer.data.preprocess import dedup_relaxation
from biosignal_transfer.data.records import Dataset, TrialArrays
from biosignal_transfer.data.synthetic import synth_generate
from biosignal_transfer.evaluation.loso import LosoProtocol, SweepRow, run_fold, run_repeated
from biosignal_transfer.evaluation.reports import ROWS_NAME, emit_reports, load_rows, save_rows
from biosignal_transfer.evaluation.sweep import (
    load_grid,
    named_grid,
    select_config,
    sweep,
)
from biosignal_transfer.model.checkpoint import save_checkpoint
from biosignal_transfer.model.disentangled import (
    ConditioningMode,
    DisentangledModel,
    ModelConfig,
    condition_matrix,
    relu_margin,
)
from biosignal_transfer.nn.gradcheck import grad_check
from biosignal_transfer.training.trainer import head_objective, joint_objective
from biosignal_transfer.utils.hashing import canonical_json, run_dir_name
from biosignal_transfer.utils.logging import configure_logging, get_logger, run_log
from biosignal_transfer.utils.numbers import format_percent

logger = get_logger(__name__)

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_FALLBACK = {"lambda_a": 0.1, "lambda_n": 0.005, "r_n": 0.2}

# Dedicated flag -> dotted config key. These beat `--set` overrides.
FLAG_KEYS: dict[str, str] = {
    "data": "data.manifest",
    "lambda_a": "train.lambda_a",
    "lambda_n": "train.lambda_n",
    "r_n": "train.r_n",
    "jobs": "eval.jobs",
    "repeats": "eval.repeats",
    "cond_mode": "model.conditioning_mode",
    "window": "data.window",
    "stride": "data.stride",
    "grid": "eval.grid",
    "grid_file": "eval.grid_file",
    "held_out": "eval.held_out",
    "epsilon": "eval.epsilon",
}


@dataclass(frozen=True)
class RunSpec:
    command: str
    config_path: Path | None = None
    overrides: tuple[str, ...] = ()
    out_dir: Path | None = None
    seed: int | None = None
    use_synth: bool = False
    rows_path: Path | None = None
    flags: dict[str, Any] = field(default_factory=dict)

    def flag_overrides(self) -> dict[str, Any]:
        """Dedicated flags as dotted keys; `--seed` targets the generator for `synth`."""
        resolved = {FLAG_KEYS[name]: value for name, value in self.flags.items()}
        if self.seed is not None:
            resolved["synth.seed" if self.command == "synth" else "train.seed"] = self.seed
        return resolved


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--data", help="Path to a dataset manifest.csv.")
    source.add_argument(
        "--synth",
        action="store_true",
        help="Generate the synthetic dataset described by the `synth` config section.",
    )
    parser.add_argument("--window", type=int, help="Window length in samples (needs --stride).")
    parser.add_argument("--stride", type=int, help="Window stride in samples (needs --window).")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-a", type=float, help="Adversary weight lambda_A.")
    parser.add_argument("--lambda-n", type=float, help="Nuisance weight lambda_N.")
    parser.add_argument("--r-n", type=float, help="Nuisance share r_N of the latent code.")
    parser.add_argument(
        "--cond-mode",
        choices=[mode.value for mode in ConditioningMode],
        help="Classifier conditioning at validation/test time.",
    )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run config file.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.FIELD=VALUE",
        help="Override one config value (repeatable).",
    )
    parser.add_argument("--seed", type=int, help="Base seed.")
    parser.add_argument("--out", type=Path, help="Output directory.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biosignal-transfer",
        description="Subject-invariant biosignal classification: training, LOSO evaluation and sweeps",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    sp_synth = subparsers.add_parser("synth", help="Write a synthetic dataset in the canonical CSV schema")
    _add_common_flags(sp_synth)

    sp_train = subparsers.add_parser("train", help="Train and evaluate one leave-one-subject-out fold")
    _add_common_flags(sp_train)
    _add_data_flags(sp_train)
    _add_train_flags(sp_train)
    sp_train.add_argument("--held-out", type=int, help="Subject held out (default: first subject).")

    sp_loso = subparsers.add_parser("loso", help="Leave-one-subject-out evaluation of one setting")
    _add_common_flags(sp_loso)
    _add_data_flags(sp_loso)
    _add_train_flags(sp_loso)
    sp_loso.add_argument("--jobs", type=int, help="Parallel fold workers.")
    sp_loso.add_argument("--repeats", type=int, help="Repeat LOSO with shifted seeds.")

    sp_sweep = subparsers.add_parser("sweep", help="LOSO evaluation over a lambda/r_N grid")
    _add_common_flags(sp_sweep)
    _add_data_flags(sp_sweep)
    _add_train_flags(sp_sweep)
    sp_sweep.add_argument("--jobs", type=int, help="Parallel fold workers.")
    sp_sweep.add_argument("--repeats", type=int, help="Repeat LOSO with shifted seeds.")
    grid = sp_sweep.add_mutually_exclusive_group()
    grid.add_argument("--grid", help="Named grid: table1 or adversarial.")
    grid.add_argument("--grid-file", help="CSV grid with columns lambda_a,lambda_n,r_n.")
    sp_sweep.add_argument("--epsilon", type=float, help="Main-accuracy band for selection.")

    sp_grad = subparsers.add_parser("gradcheck", help="Finite-difference check of all gradients")
    _add_common_flags(sp_grad)
    _add_train_flags(sp_grad)

    sp_report = subparsers.add_parser("report", help="Re-emit report files from saved sweep rows")
    _add_common_flags(sp_report)
    sp_report.add_argument("--rows", type=Path, help=f"Saved rows (default: <out>/{ROWS_NAME}).")
    sp_report.add_argument("--epsilon", type=float, help="Main-accuracy band for selection.")

    return parser


def parse_args(argv: Sequence[str] | None = None) -> RunSpec:
    parser = build_parser()
    args = parser.parse_args(argv)
    for text in args.overrides:
        try:
            parse_override(text)
        except ConfigError as exc:
            parser.error(str(exc))

    values = vars(args)
    flags = {name: values[name] for name in FLAG_KEYS if values.get(name) is not None}
    return RunSpec(
        command=args.command,
        config_path=args.config,
        overrides=tuple(args.overrides),
        out_dir=args.out,
        seed=args.seed,
        use_synth=bool(values.get("synth", False)),
        rows_path=values.get("rows"),
        flags=flags,
    )


def load_run_dataset(config: RunConfig, use_synth: bool) -> Dataset:
    """Synthetic data or a loaded manifest; relaxation dedup applies to manifests only."""
    if use_synth:
        # Every (subject, class) pair is balanced by construction.
        return synth_generate(config.synthetic_config())
    if not config.data.manifest:
        raise ValueError("no dataset: pass --data <manifest.csv>, --synth, or set data.manifest")
    dataset = load_dataset(config.data.manifest, num_samples=config.data.num_samples)
    if len(dataset) == 0:
        raise ValueError("dataset has no trials")
    if config.data.dedup_relaxation:
        dataset = dedup_relaxation(dataset)
    return dataset


def _run_dir(spec: RunSpec, config: RunConfig) -> Path:
    base = spec.out_dir if spec.out_dir is not None else get_settings().runs_dir
    target = run_directory(base, run_dir_name(config.fingerprint(), config.train.seed))
    (target / RUN_CONFIG_NAME).write_text(
        json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return target


def _protocol(config: RunConfig, log_dir: Path | None) -> LosoProtocol:
    return LosoProtocol(
        val_frac=config.data.val_frac,
        window=config.data.window,
        stride=config.data.stride,
        aggregate=config.eval.aggregate,
        jobs=config.eval.jobs,
        log_dir=log_dir,
    )


def _metric_line(row: SweepRow) -> str:
    line = (
        f"lambda_a={row.lambda_a:g} lambda_n={row.lambda_n:g} r_n={row.r_n:g} "
        f"main_acc={format_percent(row.main_acc)} adv_acc={format_percent(row.adv_acc)} "
        f"nuis_acc={format_percent(row.nuis_acc)} failed_folds={row.n_folds_failed}"
    )
    if row.repeats > 1:
        line += (
            f" repeats={row.repeats} main_sd={format_percent(row.main_acc_sd)}"
            f" adv_sd={format_percent(row.adv_acc_sd)} nuis_sd={format_percent(row.nuis_acc_sd)}"
        )
    return line


def _cmd_synth(spec: RunSpec, config: RunConfig) -> int:
    dataset = synth_generate(config.synthetic_config())
    out_dir = spec.out_dir if spec.out_dir is not None else SYNTHETIC_DIR
    manifest = write_dataset(dataset, out_dir)
    print(f"wrote {len(dataset)} trials from {len(dataset.subjects())} subjects to {manifest}")
    return 0


def _cmd_train(spec: RunSpec, config: RunConfig) -> int:
    dataset = load_run_dataset(config, spec.use_synth)
    subjects = dataset.subjects()
    held_out = config.eval.held_out if config.eval.held_out is not None else subjects[0]
    run_dir = _run_dir(spec, config)
    with run_log(run_dir):
        outcome = run_fold(
            dataset,
            held_out,
            config.train_config(),
            architecture=config.architecture(),
            protocol=_protocol(config, run_dir / FOLD_LOGS_NAME),
        )
        result = outcome.result
        if result.failed:
            raise RuntimeError(f"training failed: {result.error}")
        assert outcome.model is not None
        save_checkpoint(outcome.model, run_dir / f"checkpoint_fold{held_out:02d}.json")
    print(
        f"held_out={held_out} best_epoch={result.best_epoch} "
        f"main_acc={format_percent(result.main_acc)} adv_acc={format_percent(result.adv_acc)} "
        f"nuis_acc={format_percent(result.nuis_acc)}"
    )
    return 0


def _cmd_loso(spec: RunSpec, config: RunConfig) -> int:
    dataset = load_run_dataset(config, spec.use_synth)
    run_dir = _run_dir(spec, config)
    with run_log(run_dir):
        row = run_repeated(
            dataset,
            config.train_config(),
            config.eval.repeats,
            architecture=config.architecture(),
            protocol=_protocol(config, run_dir / FOLD_LOGS_NAME),
        )
        emit_reports([row], run_dir)
        save_rows([row], run_dir / ROWS_NAME)
    print(_metric_line(row))
    return 0


def _cmd_sweep(spec: RunSpec, config: RunConfig) -> int:
    dataset = load_run_dataset(config, spec.use_synth)
    grid = load_grid(config.eval.grid_file) if config.eval.grid_file else named_grid(config.eval.grid)
    run_dir = _run_dir(spec, config)
    with run_log(run_dir):
        rows = sweep(
            dataset,
            grid,
            config.train_config(),
            repeats=config.eval.repeats,
            architecture=config.architecture(),
            protocol=_protocol(config, run_dir / FOLD_LOGS_NAME),
        )
        emit_reports(rows, run_dir)
        save_rows(rows, run_dir / ROWS_NAME)
    for row in rows:
        print(_metric_line(row))
    print("selected " + _metric_line(select_config(rows, config.eval.epsilon)))
    return 0


def _cmd_report(spec: RunSpec, config: RunConfig) -> int:
    out_dir = spec.out_dir if spec.out_dir is not None else Path.cwd()
    rows = load_rows(spec.rows_path if spec.rows_path is not None else out_dir / ROWS_NAME)
    paths = emit_reports(rows, out_dir)
    for row in rows:
        print(_metric_line(row))
    print("selected " + _metric_line(select_config(rows, config.eval.epsilon)))
    logger.info("reports: %s", ", ".join(str(path) for path in paths.values()))
    return 0


def gradcheck_model(config: RunConfig, *, eps: float = 1e-5, max_tries: int = 20) -> float:
    """Max relative gradient error of a small random model on a random batch.

    Covers the joint step and both subject heads; the batch is redrawn while any ReLU
    input sits within 10 * eps of the kink.
    """
    train_config = config.train_config()
    if not (train_config.lambda_a or train_config.lambda_n or train_config.r_n):
        # All-zero weights would leave both subject terms unchecked.
        train_config = replace(train_config, **GRADCHECK_FALLBACK)
        logger.info("gradcheck with lambda_a=0.1 lambda_n=0.005 r_n=0.2")

    rng = np.random.default_rng(train_config.seed)
    model_config = ModelConfig(
        input_dim=6,
        num_classes=4,
        num_subjects=5,
        latent_dim=10,
        encoder_hidden=8,
        r_n=train_config.r_n,
        head_hidden=7,
        conditioning_mode=config.model.conditioning_mode,
    )
    model = DisentangledModel.initialize(model_config, rng)

    batch: TrialArrays | None = None
    for _ in range(max_tries):
        x = rng.standard_normal((8, model_config.input_dim))
        s = rng.integers(1, model_config.num_subjects + 1, size=8)
        s_cond = condition_matrix(s, ConditioningMode.ONEHOT_TRAIN, model_config.num_subjects)
        if relu_margin(model, x, s_cond) > 10 * eps:
            batch = TrialArrays(
                x=x,
                y=rng.integers(0, model_config.num_classes, size=8),
                s=s,
                trial_keys=tuple((int(subject), i) for i, subject in enumerate(s)),
            )
            break
    if batch is None:
        raise RuntimeError("could not draw a batch away from ReLU kinks")

    errors = [
        grad_check(
            joint_objective(model, batch, train_config),
            model.parameters(("encoder", "classifier", "nuisance")),
            eps,
        ),
        grad_check(head_objective(model, batch, "adversary"), model.parameters(("adversary",)), eps),
        grad_check(head_objective(model, batch, "nuisance"), model.parameters(("nuisance",)), eps),
    ]
    return max(errors)


def _cmd_gradcheck(spec: RunSpec, config: RunConfig) -> int:
    error = gradcheck_model(config)
    ok = error < GRADCHECK_TOLERANCE
    print(f"max_rel_error={error:.3e} {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "loso": _cmd_loso,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv(dotenv_path=PROJECT_ROOT / ".env")
    settings = get_settings()
    configure_logging(settings.log_level)
    spec = parse_args(argv)
    logger.debug("%s run: %s", settings.app_env, spec.command)
    try:
        config = resolve_run_config(spec.config_path, spec.overrides, spec.flag_overrides())
        if spec.command != "synth":
            logger.debug("resolved config %s", canonical_json(config.model_dump(mode="json")))
        return HANDLERS[spec.command](spec, config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.debug("run failed", exc_info=True)
        print(f"failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
