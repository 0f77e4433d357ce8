from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from biosignal_transfer.evaluation.loso import SweepRow
from biosignal_transfer.evaluation.metrics import FoldResult, TrialPrediction
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)

SWEEP_TABLE_NAME = "sweep_table.csv"
PER_SUBJECT_NAME = "per_subject.json"
ROWS_NAME = "sweep_rows.json"
SWEEP_TABLE_COLUMNS = (
    "lambda_a",
    "lambda_n",
    "r_n",
    "main_acc",
    "adv_acc",
    "nuis_acc",
    "n_folds_failed",
)


def box_stats(values: Sequence[float]) -> dict[str, float | None]:
    """Median, quartiles (linear interpolation) and extremes for box-plot rendering."""
    data = np.asarray([value for value in values if not math.isnan(value)], dtype=np.float64)
    if data.size == 0:
        return {"median": None, "q1": None, "q3": None, "min": None, "max": None}
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(data.min()),
        "max": float(data.max()),
    }


def sweep_table(rows: Sequence[SweepRow]) -> pd.DataFrame:
    records = [
        {
            "lambda_a": row.lambda_a,
            "lambda_n": row.lambda_n,
            "r_n": row.r_n,
            "main_acc": row.main_acc,
            "adv_acc": row.adv_acc,
            "nuis_acc": row.nuis_acc,
            "n_folds_failed": row.n_folds_failed,
        }
        for row in rows
    ]
    return pd.DataFrame.from_records(records, columns=list(SWEEP_TABLE_COLUMNS))


def per_subject_payload(rows: Sequence[SweepRow]) -> list[dict[str, Any]]:
    payload = []
    for row in rows:
        accuracies = row.fold_main_accuracies()
        subjects = sorted({fold.held_out_subject for fold in row.per_fold})
        folds = [
            {"held_out_subject": subject, "main_acc": accuracies.get(subject)}
            for subject in subjects
        ]
        payload.append(
            {
                "lambda_a": row.lambda_a,
                "lambda_n": row.lambda_n,
                "r_n": row.r_n,
                "repeats": row.repeats,
                "main_acc_sd": _encode_float(row.main_acc_sd),
                "adv_acc_sd": _encode_float(row.adv_acc_sd),
                "nuis_acc_sd": _encode_float(row.nuis_acc_sd),
                "folds": folds,
                **box_stats(list(accuracies.values())),
            }
        )
    return payload


def emit_reports(rows: Sequence[SweepRow], out_dir: str | Path) -> dict[str, Path]:
    """Write `sweep_table.csv` and `per_subject.json` under `out_dir`."""
    if not rows:
        raise ValueError("emit_reports needs at least one sweep row")
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)

    table_path = target / SWEEP_TABLE_NAME
    sweep_table(rows).to_csv(table_path, index=False, lineterminator="\n")

    subject_path = target / PER_SUBJECT_NAME
    subject_path.write_text(
        json.dumps(per_subject_payload(rows), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info("wrote %s and %s (%d rows)", table_path, subject_path, len(rows))
    return {"sweep_table": table_path, "per_subject": subject_path}


def read_sweep_table(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def read_per_subject(path: str | Path) -> list[dict[str, Any]]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# JSON has no NaN; failed or empty accuracies travel as null.
def _encode_float(value: float) -> float | None:
    return None if math.isnan(value) else value


def _decode_float(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def _row_to_dict(row: SweepRow) -> dict[str, Any]:
    return {
        "lambda_a": row.lambda_a,
        "lambda_n": row.lambda_n,
        "r_n": row.r_n,
        "main_acc": _encode_float(row.main_acc),
        "adv_acc": _encode_float(row.adv_acc),
        "nuis_acc": _encode_float(row.nuis_acc),
        "repeats": row.repeats,
        "main_acc_sd": _encode_float(row.main_acc_sd),
        "adv_acc_sd": _encode_float(row.adv_acc_sd),
        "nuis_acc_sd": _encode_float(row.nuis_acc_sd),
        "per_fold": [asdict(fold) for fold in row.per_fold],
        "repeat_rows": [_row_to_dict(item) for item in row.repeat_rows],
    }


def _fold_from_dict(payload: dict[str, Any]) -> FoldResult:
    fields = dict(payload)
    fields["predictions"] = tuple(TrialPrediction(**item) for item in fields["predictions"])
    fields["subject_predictions"] = tuple(
        TrialPrediction(**item) for item in fields["subject_predictions"]
    )
    return FoldResult(**fields)


def _row_from_dict(payload: dict[str, Any]) -> SweepRow:
    return SweepRow(
        lambda_a=float(payload["lambda_a"]),
        lambda_n=float(payload["lambda_n"]),
        r_n=float(payload["r_n"]),
        main_acc=_decode_float(payload["main_acc"]),
        adv_acc=_decode_float(payload["adv_acc"]),
        nuis_acc=_decode_float(payload["nuis_acc"]),
        per_fold=tuple(_fold_from_dict(item) for item in payload["per_fold"]),
        repeats=int(payload.get("repeats", 1)),
        main_acc_sd=_decode_float(payload.get("main_acc_sd", 0.0)),
        adv_acc_sd=_decode_float(payload.get("adv_acc_sd", 0.0)),
        nuis_acc_sd=_decode_float(payload.get("nuis_acc_sd", 0.0)),
        repeat_rows=tuple(_row_from_dict(item) for item in payload.get("repeat_rows", [])),
    )


def save_rows(rows: Sequence[SweepRow], path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = {"rows": [_row_to_dict(row) for row in rows]}
    target.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return target


def load_rows(path: str | Path) -> list[SweepRow]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [_row_from_dict(item) for item in payload["rows"]]
