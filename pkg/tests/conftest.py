from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from biosignal_transfer.data.records import Dataset, TrialArrays
from biosignal_transfer.data.synthetic import SyntheticConfig, synth_generate
from biosignal_transfer.model.disentangled import Architecture, DisentangledModel, ModelConfig
from biosignal_transfer.nn.core import SGDConfig
from biosignal_transfer.training.trainer import TrainConfig


@pytest.fixture
def tiny_dataset() -> Dataset:
    """4 subjects x 4 classes x 2 trials of 3 channels x 20 samples."""
    return synth_generate(
        SyntheticConfig(
            num_subjects=4,
            num_classes=4,
            num_channels=3,
            num_samples=20,
            noise=0.3,
            trials_per_pair=2,
            seed=0,
        )
    )


@pytest.fixture
def small_architecture() -> Architecture:
    return Architecture(latent_dim=10, encoder_hidden=12, head_hidden=8)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(
        sgd=SGDConfig(learning_rate=0.05, batch_size=8, epochs=3),
        early_stop_patience=0,
    )


@pytest.fixture
def small_model_config() -> ModelConfig:
    return ModelConfig(
        input_dim=6,
        num_classes=3,
        num_subjects=4,
        latent_dim=10,
        encoder_hidden=8,
        r_n=0.2,
        head_hidden=7,
    )


@pytest.fixture
def small_model(small_model_config: ModelConfig) -> DisentangledModel:
    return DisentangledModel.initialize(small_model_config, np.random.default_rng(0))


@pytest.fixture
def make_batch() -> Callable[..., TrialArrays]:
    def _make(config: ModelConfig, n_rows: int = 8, seed: int = 0) -> TrialArrays:
        rng = np.random.default_rng(seed)
        subjects = rng.integers(1, config.num_subjects + 1, size=n_rows)
        return TrialArrays(
            x=rng.standard_normal((n_rows, config.input_dim)),
            y=rng.integers(0, config.num_classes, size=n_rows),
            s=subjects,
            trial_keys=tuple((int(subject), i + 1) for i, subject in enumerate(subjects)),
        )

    return _make
