from __future__ import annotations

import json
import math

import pytest

from biosignal_transfer.evaluation.loso import SweepRow
from biosignal_transfer.evaluation.metrics import FoldResult, TrialPrediction
from biosignal_transfer.evaluation.reports import (
    PER_SUBJECT_NAME,
    SWEEP_TABLE_COLUMNS,
    SWEEP_TABLE_NAME,
    box_stats,
    emit_reports,
    load_rows,
    per_subject_payload,
    read_per_subject,
    read_sweep_table,
    save_rows,
    sweep_table,
)
from biosignal_transfer.evaluation.sweep import table1_grid
from biosignal_transfer.training.trainer import TrainConfig


def _fold(subject: int, correct: int, total: int = 4) -> FoldResult:
    prediction = TrialPrediction(
        subject_id=subject, trial_id=1, y_true=0, y_pred=0, s_pred_adv=1, s_pred_nuis=subject
    )
    return FoldResult(
        held_out_subject=subject,
        n_test_trials=total,
        main_correct=correct,
        n_subject_trials=2,
        adv_correct=1,
        nuis_correct=2,
        predictions=(prediction,),
        best_epoch=3,
    )


def _grid_rows() -> list[SweepRow]:
    rows = []
    for point in table1_grid():
        config = point.apply(TrainConfig())
        folds = [_fold(subject, correct) for subject, correct in enumerate(range(5), start=1)]
        rows.append(SweepRow.from_folds(config, folds))
    return rows


def test_box_stats_quartiles() -> None:
    stats = box_stats([0.0, 0.25, 0.5, 0.75, 1.0])
    assert stats == {"median": 0.5, "q1": 0.25, "q3": 0.75, "min": 0.0, "max": 1.0}


def test_box_stats_ignores_nan_and_handles_empty() -> None:
    assert box_stats([float("nan"), 1.0])["median"] == 1.0
    assert box_stats([])["median"] is None


def test_sweep_table_columns_and_rows() -> None:
    frame = sweep_table(_grid_rows())
    assert list(frame.columns) == list(SWEEP_TABLE_COLUMNS)
    assert len(frame) == 8
    assert math.isclose(frame.loc[0, "main_acc"], 10 / 20)
    assert (frame["n_folds_failed"] == 0).all()


def test_per_subject_payload_has_one_entry_per_fold() -> None:
    payload = per_subject_payload(_grid_rows())
    assert len(payload) == 8
    first = payload[0]
    assert [entry["held_out_subject"] for entry in first["folds"]] == [1, 2, 3, 4, 5]
    assert [entry["main_acc"] for entry in first["folds"]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert (first["q1"], first["median"], first["q3"]) == (0.25, 0.5, 0.75)


def test_failed_fold_is_listed_with_null_accuracy() -> None:
    folds = [_fold(1, 4), FoldResult(held_out_subject=2, failed=True, error="diverged")]
    row = SweepRow.from_folds(TrainConfig(), folds)
    payload = per_subject_payload([row])[0]
    assert payload["folds"] == [
        {"held_out_subject": 1, "main_acc": 1.0},
        {"held_out_subject": 2, "main_acc": None},
    ]
    assert sweep_table([row]).loc[0, "n_folds_failed"] == 1


def test_emit_reports_writes_both_files(tmp_path) -> None:
    paths = emit_reports(_grid_rows(), tmp_path / "out")

    assert paths["sweep_table"] == tmp_path / "out" / SWEEP_TABLE_NAME
    assert paths["per_subject"] == tmp_path / "out" / PER_SUBJECT_NAME
    header = paths["sweep_table"].read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(SWEEP_TABLE_COLUMNS)

    table = read_sweep_table(paths["sweep_table"])
    assert len(table) == 8
    assert table["lambda_n"].tolist() == [0.0, 0.0, 0.0, 0.001, 0.005, 0.05, 0.1, 0.2]
    assert len(read_per_subject(paths["per_subject"])) == 8


def test_emit_reports_is_byte_stable(tmp_path) -> None:
    first = emit_reports(_grid_rows(), tmp_path / "a")
    second = emit_reports(_grid_rows(), tmp_path / "b")
    for key in ("sweep_table", "per_subject"):
        assert first[key].read_bytes() == second[key].read_bytes()


def test_emit_reports_rejects_empty_rows(tmp_path) -> None:
    with pytest.raises(ValueError):
        emit_reports([], tmp_path)


def test_saved_rows_reload_with_folds_and_nulls(tmp_path) -> None:
    failed = SweepRow.from_folds(
        TrainConfig(lambda_a=0.1), [FoldResult(held_out_subject=1, failed=True, error="x")]
    )
    rows = _grid_rows()[:2] + [failed]
    path = save_rows(rows, tmp_path / "rows.json")

    assert json.loads(path.read_text(encoding="utf-8"))["rows"][2]["main_acc"] is None
    restored = load_rows(path)
    assert restored[:2] == rows[:2]
    assert math.isnan(restored[2].main_acc)
    assert restored[2].per_fold[0].failed
    assert restored[0].per_fold[0].predictions[0].s_pred_nuis == 1


def test_saved_rows_keep_repeat_structure(tmp_path) -> None:
    base = _grid_rows()[0]
    repeated = SweepRow(
        lambda_a=0.0,
        lambda_n=0.0,
        r_n=0.0,
        main_acc=0.5,
        adv_acc=0.5,
        nuis_acc=1.0,
        per_fold=base.per_fold,
        repeats=2,
        main_acc_sd=0.1,
        repeat_rows=(base, base),
    )
    restored = load_rows(save_rows([repeated], tmp_path / "rows.json"))[0]
    assert restored.repeats == 2
    assert len(restored.repeat_rows) == 2
    assert restored.main_acc_sd == 0.1
    assert restored == repeated
