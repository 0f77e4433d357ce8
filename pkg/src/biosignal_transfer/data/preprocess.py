from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from biosignal_transfer.data.records import (
    NUM_SAMPLES,
    ChannelStats,
    Dataset,
    StressLabel,
    TrialRecord,
)
from biosignal_transfer.nn.core import Vector
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)

STD_FLOOR = 1e-8


class SignalLengthError(ValueError):
    """A recording is shorter than the required number of seconds."""


def dedup_relaxation(
    dataset: Dataset, relaxation_label: int = StressLabel.RELAXATION
) -> Dataset:
    """Keep only the lowest-trial_id relaxation trial per subject."""
    first_relaxation: dict[int, int] = {}
    for trial in dataset.trials:
        if trial.label != relaxation_label:
            continue
        current = first_relaxation.get(trial.subject_id)
        if current is None or trial.trial_id < current:
            first_relaxation[trial.subject_id] = trial.trial_id

    for subject in dataset.subjects():
        if subject not in first_relaxation:
            logger.warning("subject %s has no relaxation trial; keeping its other trials", subject)

    kept = [
        trial
        for trial in dataset.trials
        if trial.label != relaxation_label
        or trial.trial_id == first_relaxation.get(trial.subject_id)
    ]
    dropped = len(dataset.trials) - len(kept)
    if dropped:
        logger.info("dropped %d repeated relaxation trial(s)", dropped)
    return dataset.with_trials(kept)


def downsample_to_1hz(
    raw_channel: Sequence[float] | np.ndarray,
    native_rate: int,
    num_samples: int = NUM_SAMPLES,
) -> Vector:
    """Average each 1-second window, then crop to `num_samples` seconds."""
    rate = int(native_rate)
    if rate < 1 or rate != native_rate:
        raise ValueError(f"native_rate must be a positive integer, got {native_rate}")
    values = np.asarray(raw_channel, dtype=np.float64).reshape(-1)
    seconds = values.shape[0] // rate
    if seconds < num_samples:
        raise SignalLengthError(
            f"recording covers {seconds} s at {rate} Hz, need at least {num_samples} s"
        )
    # Incomplete trailing second is dropped.
    per_second = values[: seconds * rate].reshape(seconds, rate).mean(axis=1)
    return per_second[:num_samples]


def fit_channel_stats(trials: Sequence[TrialRecord]) -> ChannelStats:
    """Per-channel mean and population std pooled over all samples of `trials`."""
    if not trials:
        raise ValueError("channel statistics need at least one trial")
    stacked = np.stack([trial.signal for trial in trials])
    mean = stacked.mean(axis=(0, 2))
    std = np.maximum(stacked.std(axis=(0, 2)), STD_FLOOR)
    return ChannelStats(mean=mean, std=std)


def apply_channel_stats(trial: TrialRecord, stats: ChannelStats) -> TrialRecord:
    scaled = (trial.signal - stats.mean[:, None]) / stats.std[:, None]
    return trial.with_signal(scaled)


def apply_standardization(dataset: Dataset, stats: ChannelStats) -> Dataset:
    return dataset.with_trials(apply_channel_stats(trial, stats) for trial in dataset.trials)


def standardize(dataset: Dataset, stats_source: Sequence[TrialRecord]) -> Dataset:
    """Z-score every channel of `dataset` with statistics of `stats_source` only."""
    return apply_standardization(dataset, fit_channel_stats(stats_source))


def make_windows(dataset: Dataset, window: int, stride: int) -> Dataset:
    """Cut each trial into `window`-sample windows every `stride` samples.

    Windows keep the parent subject, label and trial id, so predictions can be voted
    back to trial level.
    """
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window}/{stride}")
    windows: list[TrialRecord] = []
    for trial in dataset.trials:
        if trial.num_samples < window:
            raise SignalLengthError(
                f"trial {trial.trial_id} of subject {trial.subject_id} has "
                f"{trial.num_samples} samples, shorter than window {window}"
            )
        for index, start in enumerate(range(0, trial.num_samples - window + 1, stride)):
            windows.append(
                TrialRecord(
                    subject_id=trial.subject_id,
                    label=trial.label,
                    trial_id=trial.trial_id,
                    signal=trial.signal[:, start : start + window],
                    window_index=index,
                )
            )
    return dataset.with_trials(windows)
