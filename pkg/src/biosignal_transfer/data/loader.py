"""Canonical CSV dataset: `manifest.csv` plus one CSV per trial.

manifest.csv header: subject_id,trial_id,label,native_rate_hz,path
trial file header:   eda,temp,acc_x,acc_y,acc_z,heart_rate,spo2 (one row per native sample)

`path` is resolved relative to the manifest's directory. Trials recorded above 1 Hz are
averaged down to 1 Hz on load; every record comes out as channels x NUM_SAMPLES.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from biosignal_transfer.data.preprocess import SignalLengthError, downsample_to_1hz
from biosignal_transfer.data.records import (
    CHANNELS,
    NUM_SAMPLES,
    Dataset,
    StressLabel,
    TrialRecord,
)
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)

MANIFEST_COLUMNS: tuple[str, ...] = ("subject_id", "trial_id", "label", "native_rate_hz", "path")
MANIFEST_NAME = "manifest.csv"


class DatasetParseError(ValueError):
    def __init__(self, path: str | Path, message: str, *, line: int | None = None) -> None:
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else f"{self.path}"
        super().__init__(f"{where}: {message}")


def _parse_int(value: object, *, field: str, path: Path, line: int) -> int:
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        raise DatasetParseError(path, f"{field} must be an integer, got '{text}'", line=line)


def _read_manifest(manifest_path: Path) -> pd.DataFrame:
    if not manifest_path.is_file():
        raise DatasetParseError(manifest_path, "manifest file not found")
    try:
        frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(MANIFEST_COLUMNS))
    except pd.errors.ParserError as exc:
        raise DatasetParseError(manifest_path, f"malformed CSV ({exc})")

    columns = [str(column).strip() for column in frame.columns]
    if columns != list(MANIFEST_COLUMNS):
        raise DatasetParseError(
            manifest_path,
            f"header must be {','.join(MANIFEST_COLUMNS)}, got {','.join(columns)}",
            line=1,
        )
    frame.columns = columns
    return frame


def read_trial_signal(
    trial_path: Path,
    *,
    native_rate: int,
    channels: Sequence[str] = CHANNELS,
    num_samples: int = NUM_SAMPLES,
) -> np.ndarray:
    """Read one trial CSV and return a channels x num_samples matrix at 1 Hz."""
    if not trial_path.is_file():
        raise DatasetParseError(trial_path, "trial file not found")
    try:
        frame = pd.read_csv(trial_path, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DatasetParseError(trial_path, f"malformed CSV ({exc})")

    columns = [str(column).strip() for column in frame.columns]
    if columns != list(channels):
        raise DatasetParseError(
            trial_path,
            f"expected {len(channels)} columns {','.join(channels)}, got {','.join(columns)}",
            line=1,
        )

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad_rows = numeric.index[numeric.isna().any(axis=1) | ~np.isfinite(numeric).all(axis=1)]
    if len(bad_rows):
        raise DatasetParseError(
            trial_path, "non-numeric or non-finite sample", line=int(bad_rows[0]) + 2
        )

    needed = num_samples * native_rate
    if len(numeric) < needed:
        raise DatasetParseError(
            trial_path,
            f"expected at least {needed} sample rows ({num_samples} s at {native_rate} Hz), "
            f"got {len(numeric)}",
        )

    values = numeric.to_numpy(dtype=np.float64)
    try:
        return np.stack(
            [
                downsample_to_1hz(values[:, column], native_rate, num_samples)
                for column in range(values.shape[1])
            ]
        )
    except SignalLengthError as exc:
        raise DatasetParseError(trial_path, str(exc))


def load_dataset(
    manifest_path: str | Path,
    *,
    channels: Sequence[str] = CHANNELS,
    num_samples: int = NUM_SAMPLES,
    num_classes: int = len(StressLabel),
) -> Dataset:
    manifest = Path(manifest_path)
    frame = _read_manifest(manifest)
    base_dir = manifest.parent

    trials: list[TrialRecord] = []
    for row_number, row in enumerate(frame.to_dict(orient="records")):
        line = row_number + 2
        subject_id = _parse_int(row["subject_id"], field="subject_id", path=manifest, line=line)
        trial_id = _parse_int(row["trial_id"], field="trial_id", path=manifest, line=line)
        label = _parse_int(row["label"], field="label", path=manifest, line=line)
        native_rate = _parse_int(
            row["native_rate_hz"], field="native_rate_hz", path=manifest, line=line
        )
        if subject_id < 1:
            raise DatasetParseError(manifest, f"subject_id must be >= 1, got {subject_id}", line=line)
        if not 0 <= label < num_classes:
            raise DatasetParseError(
                manifest, f"label must lie in [0, {num_classes}), got {label}", line=line
            )
        if native_rate < 1:
            raise DatasetParseError(
                manifest, f"native_rate_hz must be >= 1, got {native_rate}", line=line
            )
        rel_path = str(row["path"]).strip()
        if not rel_path:
            raise DatasetParseError(manifest, "path is empty", line=line)

        signal = read_trial_signal(
            base_dir / rel_path,
            native_rate=native_rate,
            channels=channels,
            num_samples=num_samples,
        )
        trials.append(
            TrialRecord(subject_id=subject_id, label=label, trial_id=trial_id, signal=signal)
        )

    num_subjects = max((trial.subject_id for trial in trials), default=0)
    logger.info(
        "loaded %d trial(s) from %d subject(s) via %s",
        len(trials),
        len({trial.subject_id for trial in trials}),
        manifest,
    )
    return Dataset(trials=tuple(trials), num_subjects=num_subjects, num_classes=num_classes)


def channel_names(num_channels: int) -> tuple[str, ...]:
    if num_channels == len(CHANNELS):
        return CHANNELS
    return tuple(f"ch{index}" for index in range(num_channels))


def write_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write `dataset` in the canonical schema at 1 Hz and return the manifest path."""
    root = Path(out_dir)
    trial_dir = root / "trials"
    trial_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict[str, object]] = []
    for trial in dataset.trials:
        name = f"s{trial.subject_id:02d}_t{trial.trial_id:02d}"
        if trial.window_index is not None:
            name = f"{name}_w{trial.window_index:03d}"
        rel_path = Path("trials") / f"{name}.csv"
        frame = pd.DataFrame(trial.signal.T, columns=list(channel_names(trial.num_channels)))
        frame.to_csv(root / rel_path, index=False)
        rows.append(
            {
                "subject_id": trial.subject_id,
                "trial_id": trial.trial_id,
                "label": trial.label,
                "native_rate_hz": 1,
                "path": rel_path.as_posix(),
            }
        )

    manifest = root / MANIFEST_NAME
    pd.DataFrame(rows, columns=list(MANIFEST_COLUMNS)).to_csv(manifest, index=False)
    return manifest
