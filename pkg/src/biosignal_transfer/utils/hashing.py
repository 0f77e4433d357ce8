from __future__ import annotations

import json
from collections.abc import Mapping
from enum import Enum
from hashlib import sha256
from pathlib import Path
from typing import Any

import numpy as np


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def canonical_json(payload: Mapping[str, Any]) -> str:
    return json.dumps(
        dict(payload),
        sort_keys=True,
        separators=(",", ":"),
        default=_json_default,
    )


def config_hash(payload: Mapping[str, Any], *, length: int = 12) -> str:
    digest = sha256(canonical_json(payload).encode("utf-8")).hexdigest()
    return digest[:length]


def run_dir_name(payload: Mapping[str, Any], seed: int) -> str:
    """Directory name of a run: `<config-hash>-seed<seed>`."""
    return f"{config_hash(payload)}-seed{int(seed)}"
