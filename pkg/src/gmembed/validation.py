"""Input validation helpers used by the functional core and the estimators.

Everything numerical in this package runs in 64-bit floats; these helpers
coerce and check once at the public boundary so the internals can assume
clean arrays.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError


def as_matrix(X, name="X") -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ContractError(f"{name} must have at least one row")
    if not np.all(np.isfinite(X)):
        raise ContractError(f"{name} contains non-finite values")
    return X


def as_vector(z, name="z") -> np.ndarray:
    """Coerce to a 1-D float64 array with finite entries."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ContractError(f"{name} contains non-finite values")
    return z


def as_labels(y, n_rows=None, n_classes=None, name="labels") -> np.ndarray:
    """Coerce to a 1-D int64 label array, optionally checking range/length."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ContractError(f"{name} must be integer class ids")
        y = rounded
    y = y.astype(np.int64)
    if n_rows is not None and y.shape[0] != n_rows:
        raise ContractError(f"{name} has length {y.shape[0]}, expected {n_rows}")
    if y.size and y.min() < 0:
        raise ContractError(f"{name} contains negative class ids")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ContractError(
            f"{name} contains class id {int(y.max())} >= class count {n_classes}"
        )
    return y


def check_positive(value, name) -> float:
    value = float(value)
    if not value > 0:
        raise ContractError(f"{name} must be positive, got {value}")
    return value


def check_positive_int(value, name) -> int:
    ivalue = int(value)
    if ivalue != value or ivalue < 1:
        raise ContractError(f"{name} must be a positive integer, got {value}")
    return ivalue
