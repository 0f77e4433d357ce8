from __future__ import annotations

import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

_DEFAULT_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"
_PACKAGE_LOGGER = "biosignal_transfer"
_CONFIGURED = False

RUN_LOG_NAME = "run.log"


def _resolve_level(level: str | int | None) -> str | int:
    resolved: str | int = level if level is not None else os.getenv("LOG_LEVEL", "INFO")
    if isinstance(resolved, str):
        resolved = resolved.strip().upper() or "INFO"
    return resolved


def configure_logging(level: str | int | None = None) -> None:
    global _CONFIGURED
    if _CONFIGURED:
        return

    resolved = _resolve_level(level)
    logging.basicConfig(level=resolved, format=_DEFAULT_FORMAT)
    # basicConfig is a no-op when the root logger already has handlers.
    logging.getLogger(_PACKAGE_LOGGER).setLevel(resolved)
    _CONFIGURED = True


@contextmanager
def run_log(run_dir: str | Path) -> Iterator[Path]:
    """Mirror package log records into `<run_dir>/run.log` for the duration of the block.

    Records from fold workers in other processes are not captured; their NDJSON training
    logs cover that part of a run.
    """
    path = Path(run_dir) / RUN_LOG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setFormatter(logging.Formatter(_DEFAULT_FORMAT))
    package_logger = logging.getLogger(_PACKAGE_LOGGER)
    package_logger.addHandler(handler)
    try:
        yield path
    finally:
        package_logger.removeHandler(handler)
        handler.close()


def get_logger(name: str) -> logging.Logger:
    configure_logging()
    return logging.getLogger(name)
