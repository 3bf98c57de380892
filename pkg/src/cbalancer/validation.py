"""Input checks for array-shaped entry points (the estimator API)."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .core import N_RESOURCES
from .errors import InvalidConfig, LengthMismatch, UnknownNode


def check_utilization(X) -> np.ndarray:
    """Validate a (k, R) utilization matrix; k may be zero."""
    X = check_array(X, dtype=float, ensure_min_samples=0, ensure_all_finite=True)
    if X.shape[1] != N_RESOURCES:
        raise ValueError(f"utilization needs {N_RESOURCES} resource columns, got {X.shape[1]}")
    if (X < 0).any():
        raise ValueError("utilization must be non-negative")
    return X


def check_assignment(y, n_containers: int, n_nodes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("assignment must be one-dimensional")
    if len(y) != n_containers:
        raise LengthMismatch(f"assignment length {len(y)} != {n_containers} containers")
    if len(y) and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("assignment entries must be integral node ids")
    y = y.astype(np.int64)
    if len(y) and (y.min() < 0 or y.max() >= n_nodes):
        raise UnknownNode(f"assignment entries must lie in [0, {n_nodes})")
    return y


def check_probability(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise InvalidConfig(f"{name} must be a probability, got {value!r}")
    return float(value)


def check_count(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise InvalidConfig(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
