from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from biosignal_transfer.data.records import TrialArrays, TrialRecord, to_arrays
from biosignal_transfer.model.disentangled import (
    ConditioningMode,
    DisentangledModel,
    infer_logits,
)

Aggregate = Literal["trial", "window"]


@dataclass(frozen=True)
class TrialPrediction:
    subject_id: int
    trial_id: int
    y_true: int
    y_pred: int
    s_pred_adv: int
    s_pred_nuis: int


@dataclass(frozen=True)
class EvaluationResult:
    main_acc: float
    adv_acc: float
    nuis_acc: float
    predictions: tuple[TrialPrediction, ...]

    @property
    def n_trials(self) -> int:
        return len(self.predictions)

    @property
    def main_correct(self) -> int:
        return sum(1 for row in self.predictions if row.y_pred == row.y_true)

    @property
    def adv_correct(self) -> int:
        return sum(1 for row in self.predictions if row.s_pred_adv == row.subject_id)

    @property
    def nuis_correct(self) -> int:
        return sum(1 for row in self.predictions if row.s_pred_nuis == row.subject_id)


@dataclass(frozen=True)
class FoldResult:
    """One LOSO fold.

    Main accuracy is scored on the held-out subject's test trials. Subject-head accuracies
    are scored on the fold's validation trials: the held-out identity never appears among
    the training labels, so those heads can only be judged on known subjects.
    """

    held_out_subject: int
    n_test_trials: int = 0
    main_correct: int = 0
    n_subject_trials: int = 0
    adv_correct: int = 0
    nuis_correct: int = 0
    predictions: tuple[TrialPrediction, ...] = field(default=())
    subject_predictions: tuple[TrialPrediction, ...] = field(default=())
    best_epoch: int = 0
    failed: bool = False
    error: str | None = None

    @property
    def main_acc(self) -> float:
        return self.main_correct / self.n_test_trials if self.n_test_trials else float("nan")

    @property
    def adv_acc(self) -> float:
        return self.adv_correct / self.n_subject_trials if self.n_subject_trials else float("nan")

    @property
    def nuis_acc(self) -> float:
        return (
            self.nuis_correct / self.n_subject_trials if self.n_subject_trials else float("nan")
        )


def _argmax(logits: np.ndarray) -> np.ndarray:
    # np.argmax breaks ties toward the lowest index.
    return np.argmax(logits, axis=1).astype(np.int64)


def head_predictions(
    model: DisentangledModel,
    arrays: TrialArrays,
    mode: ConditioningMode | str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row argmax of (task label, adversary subject id, nuisance subject id)."""
    out = infer_logits(model, arrays.x, arrays.s, mode)
    return _argmax(out.y_logits), _argmax(out.adv_logits) + 1, _argmax(out.nuis_logits) + 1


def head_accuracies(
    model: DisentangledModel,
    arrays: TrialArrays,
    mode: ConditioningMode | str,
) -> tuple[float, float, float]:
    if len(arrays) == 0:
        raise ValueError("cannot score an empty trial set")
    y_pred, s_adv, s_nuis = head_predictions(model, arrays, mode)
    return (
        float(np.mean(y_pred == arrays.y)),
        float(np.mean(s_adv == arrays.s)),
        float(np.mean(s_nuis == arrays.s)),
    )


def _vote(values: list[int]) -> int:
    counts = np.bincount(np.asarray(values, dtype=np.int64))
    return int(np.argmax(counts))


def evaluate(
    model: DisentangledModel,
    trials: Sequence[TrialRecord] | TrialArrays,
    conditioning_mode: ConditioningMode | str,
    *,
    aggregate: Aggregate = "trial",
) -> EvaluationResult:
    """Argmax decoding for all three heads.

    With `aggregate="trial"` windows of one trial are merged by majority vote (ties to the
    smallest index); unwindowed trials are their own single vote.
    """
    arrays = trials if isinstance(trials, TrialArrays) else to_arrays(list(trials))
    if len(arrays) == 0:
        raise ValueError("cannot evaluate an empty trial list")
    y_pred, s_adv, s_nuis = head_predictions(model, arrays, conditioning_mode)

    rows: list[TrialPrediction] = []
    if aggregate == "window":
        for i, (subject, trial_id) in enumerate(arrays.trial_keys):
            rows.append(
                TrialPrediction(
                    subject_id=subject,
                    trial_id=trial_id,
                    y_true=int(arrays.y[i]),
                    y_pred=int(y_pred[i]),
                    s_pred_adv=int(s_adv[i]),
                    s_pred_nuis=int(s_nuis[i]),
                )
            )
    elif aggregate == "trial":
        groups: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, key in enumerate(arrays.trial_keys):
            groups[key].append(i)
        for (subject, trial_id), members in groups.items():
            rows.append(
                TrialPrediction(
                    subject_id=subject,
                    trial_id=trial_id,
                    y_true=int(arrays.y[members[0]]),
                    y_pred=_vote([int(y_pred[i]) for i in members]),
                    s_pred_adv=_vote([int(s_adv[i]) for i in members]),
                    s_pred_nuis=_vote([int(s_nuis[i]) for i in members]),
                )
            )
    else:
        raise ValueError(f"aggregate must be 'trial' or 'window', got '{aggregate}'")

    n_rows = len(rows)
    return EvaluationResult(
        main_acc=sum(row.y_pred == row.y_true for row in rows) / n_rows,
        adv_acc=sum(row.s_pred_adv == row.subject_id for row in rows) / n_rows,
        nuis_acc=sum(row.s_pred_nuis == row.subject_id for row in rows) / n_rows,
        predictions=tuple(rows),
    )
