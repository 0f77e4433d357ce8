from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import pandas as pd

from biosignal_transfer.data.records import Dataset
from biosignal_transfer.evaluation.loso import LosoProtocol, SweepRow, run_repeated
from biosignal_transfer.model.disentangled import Architecture
from biosignal_transfer.training.trainer import TrainConfig
from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)

GRID_COLUMNS = ("lambda_a", "lambda_n", "r_n")


@dataclass(frozen=True)
class GridPoint:
    lambda_a: float
    lambda_n: float
    r_n: float

    def apply(self, config: TrainConfig) -> TrainConfig:
        return replace(config, lambda_a=self.lambda_a, lambda_n=self.lambda_n, r_n=self.r_n)


GRID_REGISTRY: dict[str, Callable[[], list[GridPoint]]] = {}


def register_grid(name: str) -> Callable[[Callable[[], list[GridPoint]]], Callable[[], list[GridPoint]]]:
    def decorator(fn: Callable[[], list[GridPoint]]) -> Callable[[], list[GridPoint]]:
        if name in GRID_REGISTRY:
            raise ValueError(f"Cannot register duplicate grid ({name})")
        GRID_REGISTRY[name] = fn
        return fn

    return decorator


@register_grid("table1")
def table1_grid() -> list[GridPoint]:
    """Baseline, two adversary-only rows, then the nuisance sweep at r_N = 0.2."""
    rows = [GridPoint(0.0, 0.0, 0.0), GridPoint(0.005, 0.0, 0.0), GridPoint(0.1, 0.0, 0.0)]
    rows.extend(GridPoint(0.1, lambda_n, 0.2) for lambda_n in (0.001, 0.005, 0.05, 0.1, 0.2))
    return rows


@register_grid("adversarial")
def adversarial_grid() -> list[GridPoint]:
    return [GridPoint(0.05, 0.0, 0.0), GridPoint(0.1, 0.0, 0.0)]


def named_grid(name: str) -> list[GridPoint]:
    try:
        return GRID_REGISTRY[name]()
    except KeyError:
        known = ", ".join(sorted(GRID_REGISTRY))
        raise ValueError(f"Unknown grid '{name}' (known: {known})") from None


def load_grid(path: str | Path) -> list[GridPoint]:
    """CSV with header lambda_a,lambda_n,r_n; one grid point per row."""
    frame = pd.read_csv(path)
    missing = [column for column in GRID_COLUMNS if column not in frame.columns]
    if missing:
        raise ValueError(f"{path}: grid file is missing column(s) {', '.join(missing)}")
    points = [
        GridPoint(float(row.lambda_a), float(row.lambda_n), float(row.r_n))
        for row in frame.itertuples(index=False)
    ]
    if not points:
        raise ValueError(f"{path}: grid file has no rows")
    return points


def sweep(
    dataset: Dataset,
    grid: Sequence[GridPoint],
    base_config: TrainConfig,
    *,
    repeats: int = 1,
    architecture: Architecture = Architecture(),
    protocol: LosoProtocol = LosoProtocol(),
) -> list[SweepRow]:
    """One LOSO evaluation per grid point, in grid order, all from the same base seed."""
    if not grid:
        raise ValueError("sweep needs a nonempty grid")
    rows: list[SweepRow] = []
    for index, point in enumerate(grid):
        row_protocol = protocol
        if protocol.log_dir is not None:
            row_protocol = replace(protocol, log_dir=Path(protocol.log_dir) / f"row_{index:02d}")
        row = run_repeated(
            dataset,
            point.apply(base_config),
            repeats,
            architecture=architecture,
            protocol=row_protocol,
        )
        if row.failed:
            logger.warning(
                "grid point %s: %d fold(s) failed", point, row.n_folds_failed
            )
        rows.append(row)
    return rows


def _selection_key(row: SweepRow) -> tuple[float, float, float, float]:
    # Larger margin first, then the smaller nuisance weight; the remaining fields only
    # make the order total.
    return (-(row.nuis_acc - row.adv_acc), row.lambda_n, row.lambda_a, row.r_n)


def select_config(rows: Iterable[SweepRow], epsilon: float = 0.01) -> SweepRow:
    """Pick the row with the widest nuisance-over-adversary margin among near-best main accuracy."""
    candidates = [row for row in rows if not math.isnan(row.main_acc)]
    if not candidates:
        raise ValueError("select_config needs at least one row with a finite main accuracy")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    best_main = max(row.main_acc for row in candidates)
    band = [row for row in candidates if row.main_acc >= best_main - epsilon]
    return min(band, key=_selection_key)
