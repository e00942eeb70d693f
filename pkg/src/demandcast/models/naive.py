"""Seasonal-naive reference predictor: repeat the value from one week earlier."""

from __future__ import annotations

import numpy as np

SEASON_DAYS = 7


def seasonal_naive_forecast(train: np.ndarray, horizon: int, period: int = SEASON_DAYS) -> np.ndarray:
    """Predict each future day from the value ``period`` days before it.

    Predictions reaching past the training window use earlier predictions,
    so the last training week tiles across the horizon.  A series shorter
    than one period falls back to its final value.
    """
    train = np.asarray(train, dtype=np.float64)
    if len(train) == 0:
        raise ValueError("training series is empty")
    out = np.empty(horizon, dtype=np.float64)
    for j in range(horizon):
        back = j - period
        if back >= 0:
            out[j] = out[back]
        elif len(train) + back >= 0:
            out[j] = train[len(train) + back]
        else:
            out[j] = train[-1]
    return out


def seasonal_naive_insample(train: np.ndarray, period: int = SEASON_DAYS) -> np.ndarray:
    """One-step in-sample predictions from day 1 on (day 0 has no history).

    Days without a full seasonal lag fall back to the previous value.
    """
    train = np.asarray(train, dtype=np.float64)
    n = len(train)
    out = np.empty(max(n - 1, 0), dtype=np.float64)
    for t in range(1, n):
        out[t - 1] = train[t - period] if t >= period else train[t - 1]
    return out
