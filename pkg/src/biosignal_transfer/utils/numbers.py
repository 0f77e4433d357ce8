from __future__ import annotations

import math
from typing import Any


def safe_float(value: Any, *, default: float = 0.0) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return default


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for non-negative input.

    The product is first snapped to 9 decimals so that `100 * 0.2` or
    `76 * 0.1` do not fall on the wrong side of a half.
    """
    return int(math.floor(round(float(value), 9) + 0.5))


def format_percent(
    value: Any | None,
    *,
    signed: bool = False,
    precision: int = 2,
    ratio: bool = True,
) -> str:
    if value is None:
        return "n/a"
    pct = safe_float(value) * 100.0 if ratio else safe_float(value)
    if math.isnan(pct):
        return "n/a"
    sign = "+" if signed and pct > 0 else ""
    return f"{sign}{pct:.{precision}f}%"
