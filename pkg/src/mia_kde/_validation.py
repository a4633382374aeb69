"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .tabular import MEMBER, NON_MEMBER


def check_1d(x, name: str = "X") -> np.ndarray:
    """Accept a 1-D array or a single-column 2-D array of finite reals."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    elif arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if n is not None and len(arr) != n:
        raise ValueError(f"{name} has {len(arr)} entries, expected {n}")
    if not np.isin(arr, (MEMBER, NON_MEMBER)).all():
        raise ValueError(f"{name} must contain only 0 (non-member) and 1 (member)")
    return arr.astype(np.int8)


def check_probability(value: float, name: str, closed: bool = False) -> float:
    v = float(value)
    ok = 0.0 <= v <= 1.0 if closed else 0.0 < v < 1.0
    if not ok:
        interval = "[0, 1]" if closed else "(0, 1)"
        raise ValueError(f"{name} must lie in {interval}, got {value!r}")
    return v
