"""Post-hoc linear probes: how much subject identity can be read off a latent slice."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from biosignal_transfer.data.records import TrialRecord, to_arrays
from biosignal_transfer.model.disentangled import DisentangledModel, encode, split_latent
from biosignal_transfer.nn.core import (
    DenseLayer,
    Matrix,
    sgd_step,
    softmax_cross_entropy,
)
from biosignal_transfer.utils.logging import get_logger
from biosignal_transfer.utils.numbers import round_half_up

logger = get_logger(__name__)

LatentSlice = Literal["z", "z_a", "z_n"]


@dataclass(frozen=True)
class ProbeResult:
    accuracy: float
    baseline: float
    n_train: int
    n_test: int
    feature_dim: int


def fit_softmax_probe(
    features: Matrix,
    labels: np.ndarray,
    num_classes: int,
    *,
    epochs: int = 300,
    learning_rate: float = 0.5,
    seed: int = 0,
) -> DenseLayer:
    """Single dense layer trained full-batch on softmax cross-entropy."""
    layer = DenseLayer.create(np.random.default_rng(seed), features.shape[1], num_classes)
    params = {"weights": layer.weights, "bias": layer.bias}
    for _ in range(epochs):
        _, grad = softmax_cross_entropy(layer.forward(features), labels)
        _, grad_w, grad_b = layer.backward(grad)
        sgd_step(params, {"weights": grad_w, "bias": grad_b}, learning_rate)
    return layer


def latent_features(
    model: DisentangledModel, trials: Sequence[TrialRecord], target_slice: LatentSlice
) -> Matrix:
    z = encode(model, to_arrays(list(trials)).x)
    if target_slice == "z":
        return z
    z_a, z_n = split_latent(z, model.config.r_n)
    if target_slice == "z_a":
        return z_a
    if target_slice == "z_n":
        return z_n
    raise ValueError(f"target_slice must be one of z, z_a, z_n, got '{target_slice}'")


def probe_subject_information(
    model: DisentangledModel,
    trials: Sequence[TrialRecord],
    target_slice: LatentSlice,
    *,
    probe_frac: float = 0.3,
    seed: int = 0,
    epochs: int = 300,
    learning_rate: float = 0.5,
) -> ProbeResult:
    """Train a fresh softmax probe on one latent slice to predict subject id.

    The model is only read. Trials are split at random into probe-train and probe-test;
    features are z-scored with probe-train statistics. A zero-width slice yields the
    majority-class baseline.
    """
    if not 0.0 < probe_frac < 1.0:
        raise ValueError(f"probe_frac must lie in (0, 1), got {probe_frac}")
    trials = list(trials)
    if len(trials) < 2:
        raise ValueError("probing needs at least two trials")
    subjects = np.asarray([trial.subject_id for trial in trials], dtype=np.int64)
    classes, labels = np.unique(subjects, return_inverse=True)
    if classes.size < 2:
        raise ValueError("probing needs trials from at least two subjects")

    features = latent_features(model, trials, target_slice)
    n_rows = len(trials)
    n_test = min(max(round_half_up(probe_frac * n_rows), 1), n_rows - 1)
    order = np.random.default_rng(seed).permutation(n_rows)
    test_idx, train_idx = order[:n_test], order[n_test:]

    train_counts = np.bincount(labels[train_idx], minlength=classes.size)
    majority = int(np.argmax(train_counts))
    baseline = float(np.mean(labels[test_idx] == majority))

    if features.shape[1] == 0:
        logger.info("probe on empty %s slice: majority baseline %.3f", target_slice, baseline)
        return ProbeResult(
            accuracy=baseline,
            baseline=baseline,
            n_train=train_idx.size,
            n_test=n_test,
            feature_dim=0,
        )

    train_x = features[train_idx]
    mean = train_x.mean(axis=0)
    std = np.maximum(train_x.std(axis=0), 1e-8)
    probe = fit_softmax_probe(
        (train_x - mean) / std,
        labels[train_idx],
        classes.size,
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
    )
    predicted = np.argmax(probe.forward((features[test_idx] - mean) / std), axis=1)
    accuracy = float(np.mean(predicted == labels[test_idx]))
    logger.info(
        "probe on %s (%d dims): accuracy %.3f, baseline %.3f",
        target_slice,
        features.shape[1],
        accuracy,
        baseline,
    )
    return ProbeResult(
        accuracy=accuracy,
        baseline=baseline,
        n_train=train_idx.size,
        n_test=n_test,
        feature_dim=features.shape[1],
    )
