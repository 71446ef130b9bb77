"""Input validation shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .core import BlochVector, ConfigError


def check_records(X, min_steps: int = 1) -> np.ndarray:
    """2-D float array of records, one row per trajectory; a 1-D input is one record."""
    if np.ndim(X) == 1:
        X = np.reshape(np.asarray(X, dtype=float), (1, -1))
    return check_array(X, dtype=np.float64, ensure_min_features=min_steps)


def check_outcomes(y, n: int) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if y.size != n:
        raise ValueError(f"got {y.size} outcomes for {n} records")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("hidden outcomes must be +1 or -1")
    return y.astype(int)


def check_state(q) -> np.ndarray:
    try:
        return BlochVector(*np.asarray(q, dtype=float).reshape(3)).to_array()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid initial state {q!r}: {exc}") from exc


def check_step(step: int, n_steps: int) -> int:
    if not 0 <= int(step) <= n_steps:
        raise ValueError(f"step must lie in [0, {n_steps}], got {step}")
    return int(step)
