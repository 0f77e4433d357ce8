from __future__ import annotations

import pytest

from biosignal_transfer.evaluation.loso import LosoProtocol, SweepRow
from biosignal_transfer.evaluation.sweep import (
    GRID_REGISTRY,
    GridPoint,
    load_grid,
    named_grid,
    register_grid,
    select_config,
    sweep,
    table1_grid,
)
from biosignal_transfer.training.trainer import TrainConfig

# (lambda_a, lambda_n, r_n, main, adv, nuis) of the reference eight-row sweep.
REFERENCE_ROWS = [
    (0.0, 0.0, 0.0, 0.7988, 0.7113, 0.0617),
    (0.005, 0.0, 0.0, 0.7997, 0.3562, 0.0615),
    (0.1, 0.0, 0.0, 0.8034, 0.0808, 0.0620),
    (0.1, 0.001, 0.2, 0.8062, 0.0705, 0.3903),
    (0.1, 0.005, 0.2, 0.8066, 0.0790, 0.5554),
    (0.1, 0.05, 0.2, 0.8004, 0.0737, 0.7883),
    (0.1, 0.1, 0.2, 0.8036, 0.0808, 0.8372),
    (0.1, 0.2, 0.2, 0.8022, 0.0805, 0.8726),
]


def _row(lambda_a, lambda_n, r_n, main, adv, nuis) -> SweepRow:
    return SweepRow(
        lambda_a=lambda_a, lambda_n=lambda_n, r_n=r_n, main_acc=main, adv_acc=adv, nuis_acc=nuis
    )


def _reference() -> list[SweepRow]:
    return [_row(*values) for values in REFERENCE_ROWS]


def test_default_grid_has_eight_rows_in_order() -> None:
    grid = table1_grid()
    assert len(grid) == 8
    assert grid[0] == GridPoint(0.0, 0.0, 0.0)
    assert [(p.lambda_a, p.lambda_n, p.r_n) for p in grid] == [row[:3] for row in REFERENCE_ROWS]
    assert named_grid("table1") == grid


def test_named_grid_lists_known_names_on_miss() -> None:
    assert named_grid("adversarial") == [GridPoint(0.05, 0.0, 0.0), GridPoint(0.1, 0.0, 0.0)]
    with pytest.raises(ValueError) as exc_info:
        named_grid("nope")
    assert "table1" in str(exc_info.value)


def test_register_grid_rejects_duplicates() -> None:
    with pytest.raises(ValueError):
        register_grid("table1")(table1_grid)
    assert GRID_REGISTRY["table1"] is table1_grid


def test_grid_point_overrides_train_config() -> None:
    config = GridPoint(0.1, 0.005, 0.2).apply(TrainConfig(seed=9))
    assert (config.lambda_a, config.lambda_n, config.r_n, config.seed) == (0.1, 0.005, 0.2, 9)


def test_load_grid_reads_csv(tmp_path) -> None:
    path = tmp_path / "grid.csv"
    path.write_text("lambda_a,lambda_n,r_n\n0.1,0.005,0.2\n0,0,0\n", encoding="utf-8")
    assert load_grid(path) == [GridPoint(0.1, 0.005, 0.2), GridPoint(0.0, 0.0, 0.0)]


def test_load_grid_rejects_missing_columns_and_empty_files(tmp_path) -> None:
    missing = tmp_path / "missing.csv"
    missing.write_text("lambda_a,lambda_n\n0.1,0.005\n", encoding="utf-8")
    with pytest.raises(ValueError, match="r_n"):
        load_grid(missing)

    empty = tmp_path / "empty.csv"
    empty.write_text("lambda_a,lambda_n,r_n\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_grid(empty)


def test_select_config_on_reference_numbers() -> None:
    chosen = select_config(_reference(), epsilon=0.01)
    assert (chosen.lambda_a, chosen.lambda_n, chosen.r_n) == (0.1, 0.2, 0.2)
    assert chosen.adv_acc < 0.1


def test_select_config_prefers_disentangled_over_non_adversarial() -> None:
    rows = _reference()
    chosen = select_config([rows[0], rows[4]], epsilon=0.01)
    assert chosen.lambda_n == 0.005


def test_select_config_single_row() -> None:
    row = _row(0.0, 0.0, 0.0, 0.5, 0.5, 0.5)
    assert select_config([row]) is row


def test_select_config_is_order_invariant() -> None:
    rows = _reference()
    assert select_config(rows) == select_config(list(reversed(rows)))
    assert select_config(rows) == select_config(rows[3:] + rows[:3])


def test_select_config_band_excludes_weaker_main_accuracy() -> None:
    strong = _row(0.1, 0.005, 0.2, 0.80, 0.10, 0.50)
    weak_but_disentangled = _row(0.1, 0.2, 0.2, 0.70, 0.05, 0.90)
    assert select_config([strong, weak_but_disentangled], epsilon=0.01) is strong
    assert select_config([strong, weak_but_disentangled], epsilon=0.2) is weak_but_disentangled


def test_select_config_breaks_margin_ties_toward_smaller_lambda_n() -> None:
    a = _row(0.1, 0.05, 0.2, 0.8, 0.1, 0.6)
    b = _row(0.1, 0.005, 0.2, 0.8, 0.1, 0.6)
    assert select_config([a, b]) is b


def test_select_config_skips_rows_without_main_accuracy() -> None:
    failed = _row(0.1, 0.2, 0.2, float("nan"), float("nan"), float("nan"))
    ok = _row(0.0, 0.0, 0.0, 0.6, 0.5, 0.1)
    assert select_config([failed, ok]) is ok
    with pytest.raises(ValueError):
        select_config([failed])
    with pytest.raises(ValueError):
        select_config([])


def test_sweep_runs_one_row_per_grid_point(
    tiny_dataset, small_architecture, fast_train_config, tmp_path
) -> None:
    grid = [GridPoint(0.0, 0.0, 0.0), GridPoint(0.1, 0.05, 0.2)]
    rows = sweep(
        tiny_dataset,
        grid,
        fast_train_config,
        architecture=small_architecture,
        protocol=LosoProtocol(log_dir=tmp_path),
    )
    assert [(row.lambda_a, row.lambda_n, row.r_n) for row in rows] == [
        (0.0, 0.0, 0.0),
        (0.1, 0.05, 0.2),
    ]
    assert all(len(row.per_fold) == 4 for row in rows)
    assert (tmp_path / "row_01" / "fold_04.ndjson").is_file()


def test_sweep_rejects_empty_grid(tiny_dataset, fast_train_config) -> None:
    with pytest.raises(ValueError):
        sweep(tiny_dataset, [], fast_train_config)
