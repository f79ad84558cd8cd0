"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .errors import InputError


def check_positive(value, name: str) -> float:
    v = float(value)
    if not v > 0:
        raise InputError(f"{name} must be positive, got {value!r}")
    return v


def check_choice(value, name: str, choices) -> str:
    if value not in choices:
        raise InputError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
    return value


def as_time_column(X) -> np.ndarray:
    """Flatten ``X`` of shape (n,) or (n, 1) into a float vector of times."""
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr = check_array(arr, dtype=np.float64)
    if arr.shape[1] != 1:
        raise InputError(f"expected a single time column, got {arr.shape[1]} columns")
    return arr[:, 0]


def as_paths(X) -> np.ndarray:
    """2-D float array of paths, one per row; a 1-D input is one path."""
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[None, :]
    arr = check_array(arr, dtype=np.float64)
    if arr.shape[1] < 2:
        raise InputError("each path needs at least two samples")
    return arr
