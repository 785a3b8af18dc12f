"""Heuristic next-value baselines over a chronological series."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientHistoryError

DELTA_WEIGHTS = (0.4, 0.3, 0.2, 0.1)
# Same weights in tenths; integer arithmetic keeps linear series exact.
_WEIGHT_TENTHS = tuple(round(10 * w) for w in DELTA_WEIGHTS)

BASELINES = ("persistence", "delta", "weighted_delta")


def _as_series(s) -> np.ndarray:
    return np.asarray(s, dtype=float).ravel()


def persistence_predict(s: Sequence[float]) -> float:
    """Repeat the last known value."""
    v = _as_series(s)
    if v.size < 1:
        raise InsufficientHistoryError("persistence needs at least one value")
    return float(v[-1])


def delta_predict(s: Sequence[float], printed: bool = False) -> float:
    """Extrapolate the last step: ``v[n] + (v[n] - v[n-1])``.

    ``printed=True`` evaluates the literally typeset variant
    ``v[n] + (v[n] + v[n-1]) / 2`` instead, kept only for comparison.
    """
    v = _as_series(s)
    if v.size < 2:
        raise InsufficientHistoryError("delta baseline needs at least two values")
    if printed:
        return float(v[-1] + (v[-1] + v[-2]) / 2)
    return float(v[-1] + (v[-1] - v[-2]))


def weighted_delta_predict(s: Sequence[float], printed: bool = False) -> float:
    """Last value plus a 0.4/0.3/0.2/0.1 weighted sum of the last four steps.

    The most recent step gets the largest weight. ``printed=True`` swaps
    each difference for the sum of the two values, as typeset.
    """
    v = _as_series(s)
    if v.size < 5:
        raise InsufficientHistoryError("weighted delta baseline needs at least five values")
    sign = 1.0 if printed else -1.0
    step = 0.0
    for k, w in enumerate(_WEIGHT_TENTHS):
        step += w * (v[-1 - k] + sign * v[-2 - k])
    return float(v[-1] + step / 10)


def min_history(name: str) -> int:
    return {"persistence": 1, "delta": 2, "weighted_delta": 5}[name]


def baseline_predict(name: str, s: Sequence[float], printed: bool = False) -> float:
    if name == "persistence":
        return persistence_predict(s)
    if name == "delta":
        return delta_predict(s, printed=printed)
    if name == "weighted_delta":
        return weighted_delta_predict(s, printed=printed)
    raise ConfigError(f"unknown baseline {name!r}; expected one of {BASELINES}")
