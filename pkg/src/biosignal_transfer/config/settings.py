from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from biosignal_transfer.config.paths import RUNS_DIR


def _env_bool(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "t", "yes", "y", "on"}


def _env_int(name: str, default: int, *, minimum: int = 1) -> int:
    raw = str(os.getenv(name, "") or "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value >= minimum else default


@dataclass(frozen=True)
class Settings:
    app_env: str
    log_level: str
    default_jobs: int
    runs_dir: Path
    run_slow_tests: bool


def get_settings() -> Settings:
    return Settings(
        app_env=os.getenv("APP_ENV", "development"),
        log_level=os.getenv("LOG_LEVEL", "INFO").strip().upper() or "INFO",
        default_jobs=_env_int("BST_JOBS", 1),
        runs_dir=Path(os.getenv("BST_RUNS_DIR", RUNS_DIR)).expanduser(),
        run_slow_tests=_env_bool("BST_RUN_SLOW", False),
    )
