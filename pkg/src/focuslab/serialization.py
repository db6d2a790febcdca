"""JSON helpers for the line-delimited artifact formats."""

from __future__ import annotations

import json
from typing import Any

import numpy as np

SIG_DIGITS = 9


def sig(x: float) -> float:
    return float(f"{float(x):.{SIG_DIGITS}g}")


def sig_list(arr: np.ndarray) -> list:
    """Nested list of ``arr`` with every float cut to 9 significant digits."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 0:
        return sig(a)
    return [sig_list(row) for row in a] if a.ndim > 1 else [sig(v) for v in a]


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
