"""Long statistical runs. Opt in with BST_RUN_SLOW=1; the real-data sweep also needs
BST_STRESS_MANIFEST pointing at a manifest.csv in the canonical schema."""

from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np
import pytest

from biosignal_transfer.config.settings import get_settings
from biosignal_transfer.data.loader import load_dataset
from biosignal_transfer.data.preprocess import dedup_relaxation, standardize
from biosignal_transfer.data.records import to_arrays
from biosignal_transfer.data.synthetic import SyntheticConfig, synth_generate
from biosignal_transfer.evaluation.loso import run_fold
from biosignal_transfer.evaluation.probe import fit_softmax_probe, probe_subject_information
from biosignal_transfer.evaluation.reports import box_stats, per_subject_payload
from biosignal_transfer.evaluation.sweep import sweep, table1_grid
from biosignal_transfer.model.disentangled import Architecture
from biosignal_transfer.nn.core import SGDConfig
from biosignal_transfer.training.trainer import TrainConfig

pytestmark = pytest.mark.skipif(
    not get_settings().run_slow_tests, reason="set BST_RUN_SLOW=1 to run acceptance runs"
)

SUBJECT_CHANCE = 1 / 20
SYNTH = SyntheticConfig(
    num_subjects=20,
    num_classes=4,
    num_channels=7,
    num_samples=60,
    task_effect=1.0,
    subject_effect=1.0,
    noise=0.5,
    trials_per_pair=4,
)
SLOW_TRAIN = TrainConfig(
    sgd=SGDConfig(learning_rate=0.01, batch_size=16, epochs=60), early_stop_patience=0
)


def _fold_accuracies(dataset, config: TrainConfig) -> tuple[float, float, float]:
    result = run_fold(dataset, 1, config, architecture=Architecture()).result
    assert not result.failed
    return result.main_acc, result.adv_acc, result.nuis_acc


def test_linear_probe_recovers_subject_from_raw_trials() -> None:
    dataset = synth_generate(replace(SYNTH, noise=0.1))
    arrays = to_arrays(dataset.trials)
    rng = np.random.default_rng(0)
    order = rng.permutation(len(arrays))
    test, train = order[: len(order) // 4], order[len(order) // 4 :]
    mean = arrays.x[train].mean(axis=0)
    std = np.maximum(arrays.x[train].std(axis=0), 1e-8)
    probe = fit_softmax_probe((arrays.x[train] - mean) / std, arrays.s[train] - 1, 20)
    predicted = np.argmax(probe.forward((arrays.x[test] - mean) / std), axis=1) + 1
    assert np.mean(predicted == arrays.s[test]) > 0.9


def test_adversary_and_nuisance_move_subject_information() -> None:
    adv_plain, adv_censored, nuis_plain, nuis_routed = [], [], [], []
    for seed in range(5):
        dataset = synth_generate(replace(SYNTH, seed=seed))
        base = replace(SLOW_TRAIN, seed=seed)
        _, adv, nuis = _fold_accuracies(dataset, base)
        adv_plain.append(adv)
        nuis_plain.append(nuis)
        _, adv, _ = _fold_accuracies(dataset, replace(base, lambda_a=0.1))
        adv_censored.append(adv)
        _, _, nuis = _fold_accuracies(dataset, replace(base, lambda_a=0.1, lambda_n=0.2, r_n=0.2))
        nuis_routed.append(nuis)

    assert np.median(adv_censored) <= np.median(adv_plain) - 0.2
    assert np.median(nuis_routed) >= np.median(nuis_plain) + 0.2


def test_adversary_censors_subject_probe_on_z_a() -> None:
    plain, censored = [], []
    for seed in range(5):
        dataset = synth_generate(replace(SYNTH, seed=seed))
        scaled = standardize(dataset, dataset.trials).trials
        known = [trial for trial in scaled if trial.subject_id != 1]
        for lambda_a, sink in ((0.0, plain), (0.1, censored)):
            config = replace(SLOW_TRAIN, seed=seed, lambda_a=lambda_a, lambda_n=0.005, r_n=0.2)
            model = run_fold(dataset, 1, config, architecture=Architecture()).model
            assert model is not None
            sink.append(probe_subject_information(model, known, "z_a", seed=seed).accuracy)

    assert np.median(censored) <= np.median(plain)


@pytest.mark.parametrize("point", [(0.0, 0.0, 0.0), (0.1, 0.2, 0.2)])
def test_subject_heads_stay_at_chance_without_subject_effect(point) -> None:
    """20 subjects and 4 classes as in the full setup. Four trials per (subject, class) give a
    30-trial validation split instead of 8, which tightens the 3-standard-error band; 60 samples
    per trial keep the fold fast. Neither changes the chance level, since subjects carry no signal.
    """
    dataset = synth_generate(replace(SYNTH, subject_effect=0.0))
    lambda_a, lambda_n, r_n = point
    result = run_fold(
        dataset,
        1,
        replace(SLOW_TRAIN, lambda_a=lambda_a, lambda_n=lambda_n, r_n=r_n),
        architecture=Architecture(),
    ).result
    n = result.n_subject_trials
    bound = 3 * math.sqrt(SUBJECT_CHANCE * (1 - SUBJECT_CHANCE) / n)
    assert abs(result.adv_acc - SUBJECT_CHANCE) <= bound
    assert abs(result.nuis_acc - SUBJECT_CHANCE) <= bound


@pytest.mark.skipif(
    not os.getenv("BST_STRESS_MANIFEST"), reason="BST_STRESS_MANIFEST not set; real-data sweep skipped"
)
def test_sweep_trends_on_real_data() -> None:
    dataset = dedup_relaxation(load_dataset(os.environ["BST_STRESS_MANIFEST"]))
    rows = sweep(dataset, table1_grid(), TrainConfig(seed=7))

    assert rows[0].adv_acc > 3 * SUBJECT_CHANCE
    for row in rows:
        assert 0.70 <= row.main_acc <= 0.90
        if row.lambda_a == 0.1:
            assert abs(row.adv_acc - SUBJECT_CHANCE) <= 0.05

    nuisance = [row.nuis_acc for row in rows[3:]]
    drops = [b - a for a, b in zip(nuisance, nuisance[1:]) if b < a]
    assert len(drops) <= 1
    assert all(drop >= -0.02 for drop in drops)

    for entry in per_subject_payload(rows):
        assert len(entry["folds"]) == 20
        recomputed = box_stats(
            [fold["main_acc"] for fold in entry["folds"] if fold["main_acc"] is not None]
        )
        assert (entry["q1"], entry["median"], entry["q3"]) == (
            recomputed["q1"],
            recomputed["median"],
            recomputed["q3"],
        )
