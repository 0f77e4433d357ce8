from __future__ import annotations

import os
from pathlib import Path

# paths.py -> config -> biosignal_transfer -> src -> repo root
PROJECT_ROOT = Path(__file__).resolve().parents[3]

DATA_DIR = Path(os.getenv("BST_DATA_DIR", PROJECT_ROOT / "data")).expanduser()
SYNTHETIC_DIR = DATA_DIR / "synthetic"
RUNS_DIR = Path(os.getenv("BST_RUNS_DIR", PROJECT_ROOT / "runs")).expanduser()

RUN_CONFIG_NAME = "config.json"
FOLD_LOGS_NAME = "logs"


def ensure_data_dirs() -> None:
    """Ensure required local data directories exist."""
    for directory in (DATA_DIR, RUNS_DIR):
        directory.mkdir(parents=True, exist_ok=True)


def run_directory(base: Path, name: str) -> Path:
    """Create `<base>/<name>/` with its per-fold log folder and return it."""
    target = base / name
    (target / FOLD_LOGS_NAME).mkdir(parents=True, exist_ok=True)
    return target
