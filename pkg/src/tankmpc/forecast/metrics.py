"""Forecast evaluation: MAE, RMSE, WMAE, and horizon-resolved WMAE.

WMAE weights each absolute error by the actual value and divides by the
sample count, emphasizing errors during real draw events (the target is
mostly zero, so unweighted metrics reward always-predicting-zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError
from ..timeseries import TimeSeries
from .models import DrawForecast


@dataclass(frozen=True)
class ForecastMetrics:
    mae: float
    rmse: float
    wmae: float
    wmae_by_horizon: np.ndarray

    def as_dict(self) -> dict:
        return {"MAE": self.mae, "RMSE": self.rmse, "WMAE": self.wmae}


def evaluate(actual: TimeSeries, forecasts: list[DrawForecast]) -> ForecastMetrics:
    """Score forecasts against the actual flow series.

    Every forecast's horizon window must lie inside the actual series
    (origin_k indexes into ``actual``); otherwise AlignmentError.
    Per-horizon WMAE averages over forecast origins.
    """
    if not forecasts:
        raise AlignmentError("no forecasts to evaluate")
    J = len(forecasts[0])
    for f in forecasts:
        if len(f) != J:
            raise AlignmentError("forecasts have mixed horizon lengths")
        if f.origin_k < 0 or f.origin_k + J >= len(actual):
            raise AlignmentError(
                f"forecast at origin {f.origin_k} with J={J} overruns the "
                f"actual series of length {len(actual)}"
            )
    js = np.arange(1, J + 1)
    y = np.stack([actual.values[f.origin_k + js] for f in forecasts])
    yhat = np.stack([f.values for f in forecasts])
    err = y - yhat
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    weighted = y * np.abs(err)
    wmae = float(np.mean(weighted))
    wmae_by_horizon = weighted.mean(axis=0)
    return ForecastMetrics(mae, rmse, wmae, wmae_by_horizon)
