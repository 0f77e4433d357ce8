from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from biosignal_transfer.data.records import Dataset, TrialRecord


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator for X ~ p(X | y, s): class pattern + subject channel offset + noise."""

    num_subjects: int = 20
    num_classes: int = 4
    num_channels: int = 7
    num_samples: int = 300
    task_effect: float = 1.0
    subject_effect: float = 1.0
    noise: float = 0.5
    trials_per_pair: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("num_subjects", "num_classes", "num_channels", "num_samples", "trials_per_pair"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("task_effect", "subject_effect", "noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def synth_generate(cfg: SyntheticConfig) -> Dataset:
    """X[c, t] = mu_y[c, t] + nu_s[c] + eps.

    Class patterns and subject offsets are drawn once per seed; every (subject, class)
    pair gets `trials_per_pair` trials, so y and s are independent by construction.
    Draw order is fixed regardless of the effect sizes.
    """
    rng = np.random.default_rng(cfg.seed)
    shape = (cfg.num_channels, cfg.num_samples)
    class_patterns = cfg.task_effect * rng.standard_normal((cfg.num_classes, *shape))
    subject_offsets = cfg.subject_effect * rng.standard_normal(
        (cfg.num_subjects, cfg.num_channels)
    )

    trials: list[TrialRecord] = []
    for subject in range(1, cfg.num_subjects + 1):
        trial_id = 0
        for _ in range(cfg.trials_per_pair):
            for label in range(cfg.num_classes):
                noise = cfg.noise * rng.standard_normal(shape)
                signal = class_patterns[label] + subject_offsets[subject - 1][:, None] + noise
                trial_id += 1
                trials.append(
                    TrialRecord(
                        subject_id=subject, label=label, trial_id=trial_id, signal=signal
                    )
                )
    return Dataset(
        trials=tuple(trials), num_subjects=cfg.num_subjects, num_classes=cfg.num_classes
    )
