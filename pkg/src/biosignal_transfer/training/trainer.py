"""Alternating min-max training of the disentangled model.

Per batch, in fixed order:
  1. adversary (phi) descends CE(s | z_a), encoder frozen;
  2. nuisance (psi) descends CE(s | z_n), encoder frozen;
  3. encoder (theta), classifier (gamma) and, optionally, psi descend
     CE_task + lambda_N * CE_nuis - lambda_A * CE_adv with phi frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from biosignal_transfer.data.records import Dataset, TrialArrays, to_arrays
from biosignal_transfer.evaluation.metrics import head_accuracies
from biosignal_transfer.model.disentangled import (
    ConditioningMode,
    DisentangledModel,
    condition_matrix,
    encode,
    forward_all,
    split_latent,
)
from biosignal_transfer.nn.core import Matrix, SGDConfig, sgd_step, softmax_cross_entropy
from biosignal_transfer.nn.gradcheck import Objective
from biosignal_transfer.training.history import EpochHistory, EpochRecord, TrainingLog
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, *, fold_id: int | None = None, losses: dict | None = None):
        self.fold_id = fold_id
        self.losses = dict(losses or {})
        prefix = f"fold {fold_id}: " if fold_id is not None else ""
        super().__init__(f"{prefix}{message}")


@dataclass(frozen=True)
class TrainConfig:
    lambda_a: float = 0.0
    lambda_n: float = 0.0
    r_n: float = 0.0
    sgd: SGDConfig = field(default_factory=SGDConfig)
    seed: int = 0
    conditioning_mode: ConditioningMode = ConditioningMode.NUISANCE_POSTERIOR
    early_stop_patience: int = 50
    adversary_steps: int = 1
    nuisance_in_joint_step: bool = True

    def __post_init__(self) -> None:
        if self.lambda_a < 0 or self.lambda_n < 0:
            raise ValueError(
                f"lambda_A and lambda_N must be >= 0, got {self.lambda_a}, {self.lambda_n}"
            )
        if not 0.0 <= self.r_n <= 1.0:
            raise ValueError(f"r_N must lie in [0, 1], got {self.r_n}")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0 (0 disables early stopping)")
        if self.adversary_steps < 1:
            raise ValueError("adversary_steps must be >= 1")
        object.__setattr__(self, "conditioning_mode", ConditioningMode(self.conditioning_mode))


@dataclass(frozen=True)
class BatchUpdateReport:
    ce_task: float
    ce_adv: float
    ce_nuis: float
    encoder_loss: float
    batch_size: int


@dataclass(frozen=True)
class JointGradients:
    encoder_loss: float
    ce_task: float
    ce_nuis: float
    ce_adv: float
    grads: dict[str, np.ndarray]


@dataclass
class TrainResult:
    model: DisentangledModel
    history: EpochHistory


def encoder_classifier_loss(
    ce_task: float, ce_nuis: float, ce_adv: float, lambda_a: float, lambda_n: float
) -> float:
    """Minimisation form of the encoder-classifier objective."""
    return ce_task + lambda_n * ce_nuis - lambda_a * ce_adv


def _subject_targets(batch: TrialArrays) -> np.ndarray:
    return batch.s - 1


def _training_condition(model: DisentangledModel, batch: TrialArrays) -> Matrix:
    return condition_matrix(batch.s, ConditioningMode.ONEHOT_TRAIN, model.config.num_subjects)


def _pad_latent(grad_slice: Matrix, d: int, start: int) -> Matrix:
    out = np.zeros((grad_slice.shape[0], d), dtype=np.float64)
    out[:, start : start + grad_slice.shape[1]] = grad_slice
    return out


def _prefixed(group: str, grads: dict[str, np.ndarray], scale: float = 1.0) -> dict[str, np.ndarray]:
    if scale == 1.0:
        return {f"{group}.{name}": value for name, value in grads.items()}
    return {f"{group}.{name}": scale * value for name, value in grads.items()}


def joint_gradients(
    model: DisentangledModel,
    batch: TrialArrays,
    lambda_a: float,
    lambda_n: float,
    *,
    nuisance_in_joint_step: bool = True,
) -> JointGradients:
    """Loss and gradients of step 3 for encoder, classifier and (optionally) nuisance head.

    Adversary gradients only flow into the encoder; phi itself receives none. Zero lambdas
    skip their term entirely, so a non-adversarial run does the same arithmetic as a
    plain classifier.
    """
    cfg = model.config
    d = cfg.latent_dim
    cut = cfg.adversary_dim
    targets = _subject_targets(batch)

    out = forward_all(model, batch.x, _training_condition(model, batch))
    ce_task, grad_y = softmax_cross_entropy(out.y_logits, batch.y)
    ce_nuis, grad_nuis = softmax_cross_entropy(out.nuis_logits, targets)
    ce_adv, grad_adv = softmax_cross_entropy(out.adv_logits, targets)
    loss = encoder_classifier_loss(ce_task, ce_nuis, ce_adv, lambda_a, lambda_n)

    grad_cls_in, classifier_grads = model.classifier.backward(grad_y)
    grads = _prefixed("classifier", classifier_grads)
    grad_z = np.array(grad_cls_in[:, :d])

    if lambda_n:
        grad_zn, nuisance_grads = model.nuisance.backward(grad_nuis)
        if nuisance_in_joint_step:
            grads.update(_prefixed("nuisance", nuisance_grads, lambda_n))
        grad_z += lambda_n * _pad_latent(grad_zn, d, cut)
    if lambda_a:
        grad_za, _ = model.adversary.backward(grad_adv)
        grad_z -= lambda_a * _pad_latent(grad_za, d, 0)

    _, encoder_grads = model.encoder.backward(grad_z)
    grads.update(_prefixed("encoder", encoder_grads))
    return JointGradients(
        encoder_loss=loss, ce_task=ce_task, ce_nuis=ce_nuis, ce_adv=ce_adv, grads=grads
    )


def encoder_term_gradients(
    model: DisentangledModel, batch: TrialArrays
) -> dict[str, dict[str, np.ndarray]]:
    """Unweighted encoder gradients of CE_task, CE_nuis and CE_adv, each from its own backward pass."""
    cfg = model.config
    d = cfg.latent_dim
    cut = cfg.adversary_dim
    targets = _subject_targets(batch)

    out = forward_all(model, batch.x, _training_condition(model, batch))
    _, grad_y = softmax_cross_entropy(out.y_logits, batch.y)
    _, grad_nuis = softmax_cross_entropy(out.nuis_logits, targets)
    _, grad_adv = softmax_cross_entropy(out.adv_logits, targets)

    grad_cls_in, _ = model.classifier.backward(grad_y)
    grad_zn, _ = model.nuisance.backward(grad_nuis)
    grad_za, _ = model.adversary.backward(grad_adv)

    terms: dict[str, dict[str, np.ndarray]] = {}
    for name, grad_z in (
        ("task", np.array(grad_cls_in[:, :d])),
        ("nuisance", _pad_latent(grad_zn, d, cut)),
        ("adversary", _pad_latent(grad_za, d, 0)),
    ):
        _, encoder_grads = model.encoder.backward(grad_z)
        terms[name] = {key: value.copy() for key, value in encoder_grads.items()}
    return terms


def joint_objective(
    model: DisentangledModel, batch: TrialArrays, config: TrainConfig
) -> Objective:
    """Step-3 loss over a fixed batch as a (loss, grads) closure for `grad_check`.

    Gradients cover encoder, classifier and nuisance head; the adversary gets none.
    """

    def objective() -> tuple[float, dict[str, np.ndarray]]:
        joint = joint_gradients(model, batch, config.lambda_a, config.lambda_n)
        return joint.encoder_loss, joint.grads

    return objective


def head_objective(model: DisentangledModel, batch: TrialArrays, head: str) -> Objective:
    """CE(s | slice) of the adversary or nuisance head with the encoder output held fixed."""
    if head not in ("adversary", "nuisance"):
        raise ValueError(f"head must be 'adversary' or 'nuisance', got '{head}'")
    z_a, z_n = split_latent(encode(model, batch.x), model.config.r_n)
    inputs = z_a if head == "adversary" else z_n
    mlp = model.adversary if head == "adversary" else model.nuisance
    targets = _subject_targets(batch)

    def objective() -> tuple[float, dict[str, np.ndarray]]:
        loss, grad = softmax_cross_entropy(mlp.forward(inputs), targets)
        _, grads = mlp.backward(grad)
        return loss, _prefixed(head, grads)

    return objective


def _check_finite(losses: dict[str, float], fold_id: int | None) -> None:
    bad = {name: value for name, value in losses.items() if not math.isfinite(value)}
    if bad:
        detail = ", ".join(f"{name}={value}" for name, value in sorted(bad.items()))
        raise TrainingDivergedError(f"non-finite loss ({detail})", fold_id=fold_id, losses=losses)


def train_batch(
    model: DisentangledModel,
    batch: TrialArrays,
    config: TrainConfig,
    *,
    fold_id: int | None = None,
) -> BatchUpdateReport:
    if len(batch) == 0:
        raise ValueError("train_batch needs a nonempty batch")
    lr = config.sgd.learning_rate
    targets = _subject_targets(batch)

    out = forward_all(model, batch.x, _training_condition(model, batch))
    ce_task, _ = softmax_cross_entropy(out.y_logits, batch.y)
    ce_adv, _ = softmax_cross_entropy(out.adv_logits, targets)
    ce_nuis, _ = softmax_cross_entropy(out.nuis_logits, targets)
    _check_finite({"ce_task": ce_task, "ce_adv": ce_adv, "ce_nuis": ce_nuis}, fold_id)

    # Encoder is untouched until step 3, so both slices stay valid for steps 1 and 2.
    z_a, z_n = split_latent(out.z, model.config.r_n)

    adversary_params = model.adversary.parameters()
    for _ in range(config.adversary_steps):
        _, grad = softmax_cross_entropy(model.adversary.forward(z_a), targets)
        _, grads = model.adversary.backward(grad)
        sgd_step(adversary_params, grads, lr)

    _, grad = softmax_cross_entropy(model.nuisance.forward(z_n), targets)
    _, grads = model.nuisance.backward(grad)
    sgd_step(model.nuisance.parameters(), grads, lr)

    joint = joint_gradients(
        model,
        batch,
        config.lambda_a,
        config.lambda_n,
        nuisance_in_joint_step=config.nuisance_in_joint_step,
    )
    _check_finite({"encoder_loss": joint.encoder_loss}, fold_id)
    sgd_step(model.parameters(("encoder", "classifier", "nuisance")), joint.grads, lr)

    return BatchUpdateReport(
        ce_task=ce_task,
        ce_adv=ce_adv,
        ce_nuis=ce_nuis,
        encoder_loss=encoder_classifier_loss(
            ce_task, ce_nuis, ce_adv, config.lambda_a, config.lambda_n
        ),
        batch_size=len(batch),
    )


def _as_arrays(data: Dataset | TrialArrays) -> TrialArrays:
    return data if isinstance(data, TrialArrays) else to_arrays(data.trials)


def train(
    model: DisentangledModel,
    train_set: Dataset | TrialArrays,
    val_set: Dataset | TrialArrays,
    config: TrainConfig,
    *,
    fold_id: int | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Epoch loop with seeded shuffling; restores the epoch with best validation main accuracy."""
    train_arrays = _as_arrays(train_set)
    val_arrays = _as_arrays(val_set)
    if len(train_arrays) == 0:
        raise ValueError("training set is empty")
    if len(val_arrays) == 0:
        logger.warning(
            "fold %s: validation split is empty; selecting epochs on training accuracy", fold_id
        )
        val_arrays = train_arrays

    rng = np.random.default_rng(config.seed)
    n_rows = len(train_arrays)
    batch_size = config.sgd.batch_size
    patience = config.early_stop_patience

    history = EpochHistory()
    best_state = model.state_dict()
    since_best = 0

    with TrainingLog(log_path, fold_id=fold_id) as log:
        for epoch in range(1, config.sgd.epochs + 1):
            order = rng.permutation(n_rows)
            totals = np.zeros(4, dtype=np.float64)
            for start in range(0, n_rows, batch_size):
                report = train_batch(
                    model,
                    train_arrays.take(order[start : start + batch_size]),
                    config,
                    fold_id=fold_id,
                )
                totals += report.batch_size * np.array(
                    [report.ce_task, report.ce_adv, report.ce_nuis, report.encoder_loss]
                )
            means = totals / n_rows

            main_acc, adv_acc, nuis_acc = head_accuracies(
                model, val_arrays, config.conditioning_mode
            )
            record = EpochRecord(
                epoch=epoch,
                ce_task=float(means[0]),
                ce_adv=float(means[1]),
                ce_nuis=float(means[2]),
                encoder_loss=float(means[3]),
                val_main_acc=main_acc,
                val_adv_acc=adv_acc,
                val_nuis_acc=nuis_acc,
            )
            history.append(record)
            log.write(record)
            logger.debug(
                "fold %s epoch %d: ce_task=%.4f ce_adv=%.4f ce_nuis=%.4f val_main=%.3f",
                fold_id,
                epoch,
                record.ce_task,
                record.ce_adv,
                record.ce_nuis,
                main_acc,
            )

            best = history.best
            if best is None or main_acc > best.val_main_acc:
                best_state = model.state_dict()
                history.best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
            if patience and since_best >= patience:
                history.stopped_early = True
                logger.debug("fold %s: early stop at epoch %d", fold_id, epoch)
                break

    model.load_state_dict(best_state)
    return TrainResult(model=model, history=history)
