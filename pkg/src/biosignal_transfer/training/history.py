from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    ce_task: float
    ce_adv: float
    ce_nuis: float
    encoder_loss: float
    val_main_acc: float
    val_adv_acc: float
    val_nuis_acc: float


@dataclass
class EpochHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def best(self) -> EpochRecord | None:
        for record in self.records:
            if record.epoch == self.best_epoch:
                return record
        return None


class TrainingLog:
    """Newline-delimited JSON, one record per epoch."""

    def __init__(self, path: str | Path | None, *, fold_id: int | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.fold_id = fold_id
        self._handle: IO[str] | None = None

    def __enter__(self) -> TrainingLog:
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", encoding="utf-8")
        return self

    def __exit__(self, *exc: object) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def write(self, record: EpochRecord) -> None:
        if self._handle is None:
            return
        payload = {"fold_id": self.fold_id, **asdict(record)}
        self._handle.write(json.dumps(payload, sort_keys=True) + "\n")


def read_training_log(path: str | Path) -> list[dict[str, object]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]
