from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from biosignal_transfer.data.records import Dataset
from biosignal_transfer.utils.numbers import round_half_up


@dataclass(frozen=True, eq=False)
class LosoSplit:
    held_out_subject: int
    train: Dataset
    val: Dataset
    test: Dataset


def loso_split(
    dataset: Dataset,
    held_out_subject: int,
    val_frac: float = 0.1,
    seed: int = 0,
) -> LosoSplit:
    """Held-out subject's trials form the test set; the rest is shuffled into train/val."""
    if not 0.0 < val_frac < 1.0:
        raise ValueError(f"val_frac must lie in (0, 1), got {val_frac}")
    if held_out_subject not in dataset.subjects():
        raise ValueError(f"unknown subject id {held_out_subject}")

    test = [trial for trial in dataset.trials if trial.subject_id == held_out_subject]
    remaining = [trial for trial in dataset.trials if trial.subject_id != held_out_subject]

    order = np.random.default_rng(seed).permutation(len(remaining))
    n_val = round_half_up(val_frac * len(remaining))
    val = [remaining[i] for i in order[:n_val]]
    train = [remaining[i] for i in order[n_val:]]

    return LosoSplit(
        held_out_subject=held_out_subject,
        train=dataset.with_trials(train),
        val=dataset.with_trials(val),
        test=dataset.with_trials(test),
    )
