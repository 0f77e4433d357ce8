from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from biosignal_transfer.nn.core import Matrix, Vector

CHANNELS: tuple[str, ...] = ("eda", "temp", "acc_x", "acc_y", "acc_z", "heart_rate", "spo2")
NUM_SAMPLES = 300


class StressLabel(IntEnum):
    PHYSICAL = 0
    COGNITIVE = 1
    EMOTIONAL = 2
    RELAXATION = 3


@dataclass(frozen=True, eq=False)
class TrialRecord:
    subject_id: int
    label: int
    trial_id: int
    signal: Matrix
    window_index: int | None = None

    def __post_init__(self) -> None:
        signal = np.array(self.signal, dtype=np.float64, copy=True)
        if signal.ndim != 2:
            raise ValueError(
                f"trial {self.trial_id} of subject {self.subject_id}: signal must be "
                f"channels x samples, got shape {signal.shape}"
            )
        if not np.all(np.isfinite(signal)):
            raise ValueError(
                f"trial {self.trial_id} of subject {self.subject_id}: signal has non-finite values"
            )
        if self.subject_id < 1:
            raise ValueError(f"subject ids start at 1, got {self.subject_id}")
        if self.label < 0:
            raise ValueError(f"labels start at 0, got {self.label}")
        signal.setflags(write=False)
        object.__setattr__(self, "signal", signal)

    @property
    def num_channels(self) -> int:
        return int(self.signal.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.signal.shape[1])

    @property
    def trial_key(self) -> tuple[int, int]:
        return (self.subject_id, self.trial_id)

    def with_signal(self, signal: Matrix) -> TrialRecord:
        return replace(self, signal=signal)


@dataclass(frozen=True, eq=False)
class ChannelStats:
    mean: Vector
    std: Vector


@dataclass(frozen=True, eq=False)
class Dataset:
    trials: tuple[TrialRecord, ...]
    num_subjects: int
    num_classes: int = len(StressLabel)

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))
        for trial in self.trials:
            if trial.subject_id > self.num_subjects:
                raise ValueError(
                    f"subject {trial.subject_id} exceeds num_subjects={self.num_subjects}"
                )
            if trial.label >= self.num_classes:
                raise ValueError(
                    f"label {trial.label} exceeds num_classes={self.num_classes}"
                )

    def __len__(self) -> int:
        return len(self.trials)

    def subjects(self) -> list[int]:
        return sorted({trial.subject_id for trial in self.trials})

    def with_trials(self, trials: Iterable[TrialRecord]) -> Dataset:
        return replace(self, trials=tuple(trials))

    @property
    def signal_shape(self) -> tuple[int, int] | None:
        if not self.trials:
            return None
        return (self.trials[0].num_channels, self.trials[0].num_samples)


@dataclass(frozen=True, eq=False)
class TrialArrays:
    """Model-ready view of a trial list: flattened inputs plus labels and subject ids."""

    x: Matrix
    y: np.ndarray
    s: np.ndarray
    trial_keys: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def take(self, index: np.ndarray) -> TrialArrays:
        return TrialArrays(
            x=self.x[index],
            y=self.y[index],
            s=self.s[index],
            trial_keys=tuple(self.trial_keys[i] for i in index),
        )


def flatten(trial: TrialRecord) -> Vector:
    """Row-major channel concatenation: element (c, t) lands at c * T + t."""
    return np.ascontiguousarray(trial.signal).reshape(-1)


def unflatten(vector: Vector, num_channels: int, num_samples: int) -> Matrix:
    values = np.asarray(vector, dtype=np.float64)
    if values.size != num_channels * num_samples:
        raise ValueError(
            f"cannot reshape {values.size} values to {num_channels}x{num_samples}"
        )
    return values.reshape(num_channels, num_samples)


def to_arrays(trials: Sequence[TrialRecord]) -> TrialArrays:
    if not trials:
        return TrialArrays(
            x=np.zeros((0, 0)),
            y=np.zeros(0, dtype=np.int64),
            s=np.zeros(0, dtype=np.int64),
            trial_keys=(),
        )
    widths = {trial.signal.size for trial in trials}
    if len(widths) != 1:
        raise ValueError(f"trials have inconsistent signal sizes: {sorted(widths)}")
    return TrialArrays(
        x=np.stack([flatten(trial) for trial in trials]),
        y=np.asarray([trial.label for trial in trials], dtype=np.int64),
        s=np.asarray([trial.subject_id for trial in trials], dtype=np.int64),
        trial_keys=tuple(trial.trial_key for trial in trials),
    )
