from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from biosignal_transfer.data.preprocess import (
    apply_standardization,
    fit_channel_stats,
    make_windows,
)
from biosignal_transfer.data.records import Dataset
from biosignal_transfer.data.splits import loso_split
from biosignal_transfer.evaluation.metrics import Aggregate, FoldResult, evaluate
from biosignal_transfer.model.disentangled import (
    Architecture,
    DisentangledModel,
    build_model_config,
)
from biosignal_transfer.training.history import EpochHistory
from biosignal_transfer.training.trainer import TrainConfig, TrainingDivergedError, train
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class LosoProtocol:
    val_frac: float = 0.1
    window: int | None = None
    stride: int | None = None
    aggregate: Aggregate = "trial"
    jobs: int = 1
    log_dir: Path | None = None

    def __post_init__(self) -> None:
        if (self.window is None) != (self.stride is None):
            raise ValueError("window and stride must be given together")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class SweepRow:
    lambda_a: float
    lambda_n: float
    r_n: float
    main_acc: float
    adv_acc: float
    nuis_acc: float
    per_fold: tuple[FoldResult, ...] = field(default=())
    repeats: int = 1
    main_acc_sd: float = 0.0
    adv_acc_sd: float = 0.0
    nuis_acc_sd: float = 0.0
    repeat_rows: tuple[SweepRow, ...] = field(default=())

    @property
    def n_folds_failed(self) -> int:
        if self.repeat_rows:
            return sum(row.n_folds_failed for row in self.repeat_rows)
        return sum(1 for fold in self.per_fold if fold.failed)

    @property
    def failed(self) -> bool:
        return self.n_folds_failed > 0

    @classmethod
    def from_folds(
        cls, config: TrainConfig, folds: tuple[FoldResult, ...] | list[FoldResult]
    ) -> SweepRow:
        """Pool correct counts over all successful folds (not a mean of fold accuracies)."""
        ok = [fold for fold in folds if not fold.failed]
        n_test = sum(fold.n_test_trials for fold in ok)
        n_subject = sum(fold.n_subject_trials for fold in ok)
        nan = float("nan")
        return cls(
            lambda_a=config.lambda_a,
            lambda_n=config.lambda_n,
            r_n=config.r_n,
            main_acc=sum(fold.main_correct for fold in ok) / n_test if n_test else nan,
            adv_acc=sum(fold.adv_correct for fold in ok) / n_subject if n_subject else nan,
            nuis_acc=sum(fold.nuis_correct for fold in ok) / n_subject if n_subject else nan,
            per_fold=tuple(folds),
        )

    def fold_main_accuracies(self) -> dict[int, float]:
        """Held-out subject -> main accuracy, averaged over repeats; failed folds omitted."""
        rows = self.repeat_rows or (self,)
        collected: dict[int, list[float]] = {}
        for row in rows:
            for fold in row.per_fold:
                if not fold.failed:
                    collected.setdefault(fold.held_out_subject, []).append(fold.main_acc)
        return {subject: float(np.mean(values)) for subject, values in sorted(collected.items())}


@dataclass
class FoldOutcome:
    result: FoldResult
    model: DisentangledModel | None = None
    history: EpochHistory | None = None


@dataclass(frozen=True)
class _FoldTask:
    dataset: Dataset
    held_out_subject: int
    config: TrainConfig
    architecture: Architecture
    protocol: LosoProtocol


def fold_seed(base_seed: int, subject_index: int) -> int:
    return int(base_seed) + int(subject_index)


def run_fold(
    dataset: Dataset,
    held_out_subject: int,
    config: TrainConfig,
    *,
    architecture: Architecture = Architecture(),
    protocol: LosoProtocol = LosoProtocol(),
) -> FoldOutcome:
    """split -> standardize (train stats) -> optional windows -> train -> evaluate.

    `config.seed` is used as-is for the split, the model initialisation and shuffling.
    """
    split = loso_split(dataset, held_out_subject, protocol.val_frac, seed=config.seed)
    stats = fit_channel_stats(split.train.trials)
    train_set = apply_standardization(split.train, stats)
    val_set = apply_standardization(split.val, stats)
    test_set = apply_standardization(split.test, stats)
    if protocol.window is not None and protocol.stride is not None:
        train_set = make_windows(train_set, protocol.window, protocol.stride)
        val_set = make_windows(val_set, protocol.window, protocol.stride)
        test_set = make_windows(test_set, protocol.window, protocol.stride)

    num_channels, num_samples = train_set.signal_shape or (0, 0)
    model_config = build_model_config(
        architecture,
        input_dim=num_channels * num_samples,
        num_classes=dataset.num_classes,
        num_subjects=dataset.num_subjects,
        r_n=config.r_n,
        conditioning_mode=config.conditioning_mode,
    )
    model = DisentangledModel.initialize(model_config, np.random.default_rng(config.seed))
    log_path = None
    if protocol.log_dir is not None:
        log_path = Path(protocol.log_dir) / f"fold_{held_out_subject:02d}.ndjson"

    try:
        trained = train(
            model, train_set, val_set, config, fold_id=held_out_subject, log_path=log_path
        )
    except TrainingDivergedError as exc:
        logger.warning("fold %s failed: %s", held_out_subject, exc)
        return FoldOutcome(
            result=FoldResult(held_out_subject=held_out_subject, failed=True, error=str(exc))
        )

    mode = config.conditioning_mode
    test_eval = evaluate(trained.model, test_set.trials, mode, aggregate=protocol.aggregate)
    subject_trials = val_set.trials or train_set.trials
    if not val_set.trials:
        logger.warning(
            "fold %s: no validation trials; subject heads scored on training trials",
            held_out_subject,
        )
    subject_eval = evaluate(trained.model, subject_trials, mode, aggregate=protocol.aggregate)

    result = FoldResult(
        held_out_subject=held_out_subject,
        n_test_trials=test_eval.n_trials,
        main_correct=test_eval.main_correct,
        n_subject_trials=subject_eval.n_trials,
        adv_correct=subject_eval.adv_correct,
        nuis_correct=subject_eval.nuis_correct,
        predictions=test_eval.predictions,
        subject_predictions=subject_eval.predictions,
        best_epoch=trained.history.best_epoch,
    )
    logger.info(
        "fold %s: main=%.3f adv=%.3f nuis=%.3f (best epoch %d)",
        held_out_subject,
        result.main_acc,
        result.adv_acc,
        result.nuis_acc,
        result.best_epoch,
    )
    return FoldOutcome(result=result, model=trained.model, history=trained.history)


def _run_task(task: _FoldTask) -> FoldResult:
    return run_fold(
        task.dataset,
        task.held_out_subject,
        task.config,
        architecture=task.architecture,
        protocol=task.protocol,
    ).result


def run_loso(
    dataset: Dataset,
    train_config: TrainConfig,
    *,
    architecture: Architecture = Architecture(),
    protocol: LosoProtocol = LosoProtocol(),
) -> SweepRow:
    """One hyperparameter point, one fold per subject; fold seed = base seed + subject index."""
    subjects = dataset.subjects()
    if len(subjects) < 2:
        raise ValueError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")

    tasks = [
        _FoldTask(
            dataset=dataset,
            held_out_subject=subject,
            config=replace(train_config, seed=fold_seed(train_config.seed, index)),
            architecture=architecture,
            protocol=protocol,
        )
        for index, subject in enumerate(subjects)
    ]
    logger.info(
        "LOSO lambda_a=%s lambda_n=%s r_n=%s over %d folds (jobs=%d)",
        train_config.lambda_a,
        train_config.lambda_n,
        train_config.r_n,
        len(tasks),
        protocol.jobs,
    )
    if protocol.jobs > 1:
        with ProcessPoolExecutor(max_workers=protocol.jobs) as executor:
            folds = list(executor.map(_run_task, tasks))
    else:
        folds = [_run_task(task) for task in tasks]
    return SweepRow.from_folds(train_config, folds)


def run_repeated(
    dataset: Dataset,
    train_config: TrainConfig,
    repeats: int,
    *,
    architecture: Architecture = Architecture(),
    protocol: LosoProtocol = LosoProtocol(),
) -> SweepRow:
    """LOSO `repeats` times with base seeds seed + 1000 * k; mean and sample sd of pooled accuracies."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if repeats == 1:
        return run_loso(dataset, train_config, architecture=architecture, protocol=protocol)

    rows = []
    for k in range(repeats):
        repeat_protocol = protocol
        if protocol.log_dir is not None:
            repeat_protocol = replace(protocol, log_dir=Path(protocol.log_dir) / f"repeat_{k}")
        rows.append(
            run_loso(
                dataset,
                replace(train_config, seed=train_config.seed + 1000 * k),
                architecture=architecture,
                protocol=repeat_protocol,
            )
        )

    def _mean_sd(values: list[float]) -> tuple[float, float]:
        finite = [value for value in values if not math.isnan(value)]
        if not finite:
            return float("nan"), float("nan")
        sd = float(np.std(finite, ddof=1)) if len(finite) > 1 else 0.0
        return float(np.mean(finite)), sd

    main_mean, main_sd = _mean_sd([row.main_acc for row in rows])
    adv_mean, adv_sd = _mean_sd([row.adv_acc for row in rows])
    nuis_mean, nuis_sd = _mean_sd([row.nuis_acc for row in rows])
    return SweepRow(
        lambda_a=train_config.lambda_a,
        lambda_n=train_config.lambda_n,
        r_n=train_config.r_n,
        main_acc=main_mean,
        adv_acc=adv_mean,
        nuis_acc=nuis_mean,
        per_fold=rows[0].per_fold,
        repeats=repeats,
        main_acc_sd=main_sd,
        adv_acc_sd=adv_sd,
        nuis_acc_sd=nuis_sd,
        repeat_rows=tuple(rows),
    )
