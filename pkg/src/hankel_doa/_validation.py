"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .array_signal import ArrayConfig, Dataset, Snapshot


def check_snapshots(X, m: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a finite complex array of shape (n_samples, m).

    Accepts a single snapshot, a list of snapshots or :class:`Snapshot`
    objects, or a 2-D array. Real-valued input is promoted to complex.
    """
    if isinstance(X, Dataset):
        raise TypeError(f"{name}: pass dataset.inputs or dataset.labels, not the Dataset")
    if isinstance(X, Snapshot):
        X = X.values
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], Snapshot):
        X = [s.values for s in X]
    arr = np.asarray(X)
    if arr.dtype == object or not (np.issubdtype(arr.dtype, np.number) or arr.dtype == bool):
        raise ValueError(f"{name} must be numeric")
    arr = np.atleast_2d(arr.astype(complex, copy=False))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got {arr.ndim} dimensions")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} has no samples")
    if m is not None and arr.shape[1] != m:
        raise ValueError(f"{name} has {arr.shape[1]} elements per snapshot, expected {m}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_array_config(config) -> ArrayConfig:
    if isinstance(config, ArrayConfig):
        return config
    if isinstance(config, int):
        return ArrayConfig(config)
    raise TypeError("array_config must be an ArrayConfig or an element count")
