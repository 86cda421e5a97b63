"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_path(X, min_length: int = 4, name: str = "path") -> np.ndarray:
    """Return ``X`` as a finite, 1-D float64 array of at least ``min_length`` samples.

    A 2-D input with a single row or a single column is flattened, so that
    column vectors coming out of a CSV reader or a pandas frame are accepted.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise ValueError(
            f"{name} needs at least {min_length} samples, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_hurst(hurst, *, allow_one: bool = False, name: str = "hurst") -> float:
    if not isinstance(hurst, numbers.Real) or isinstance(hurst, bool):
        raise TypeError(f"{name} must be a real number, got {type(hurst).__name__}")
    h = float(hurst)
    upper_ok = h <= 1.0 if allow_one else h < 1.0
    if not (h > 0.0 and upper_ok):
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"{name} must lie in {interval}, got {hurst!r}")
    return h


def check_int(value, *, minimum: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_level(value, *, name: str, allow_one: bool = False) -> float:
    """Validate a probability level in (0, 1), or (0, 1] when ``allow_one``."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    v = float(value)
    upper_ok = v <= 1.0 if allow_one else v < 1.0
    if not (v > 0.0 and upper_ok):
        raise ValueError(f"{name} must lie in (0, 1{']' if allow_one else ')'}, got {value!r}")
    return v
