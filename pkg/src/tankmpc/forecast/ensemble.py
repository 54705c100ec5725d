"""Horizon-switched ensemble of short/medium/long-range forecasters.

The j-step-ahead forecast is produced by the short member for
1 <= j < J1, the medium member for J1 <= j < J2, and the long member
for J2 <= j <= J. The default thresholds route lookaheads 1..4 to the
reactive tree ensemble, 5..100 to the seasonal model, and 101..288 to
persistence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, UnfittedModel
from .models import DAY_STEPS, DrawForecast, ForecastContext

#: Default member assignment (short, medium, long).
DEFAULT_MEMBERS = ("random_forest", "seasonal_fourier", "persistence")


@dataclass(frozen=True)
class EnsembleConfig:
    """Lookahead thresholds and member model ids.

    ``j1`` and ``j2`` are exclusive upper bounds for the short and
    medium blocks respectively: short covers 1..j1-1, medium covers
    j1..j2-1, long covers j2..j.
    """

    j1: int = 5
    j2: int = 101
    j: int = DAY_STEPS
    short_model: str = DEFAULT_MEMBERS[0]
    medium_model: str = DEFAULT_MEMBERS[1]
    long_model: str = DEFAULT_MEMBERS[2]

    def __post_init__(self):
        if not (1 <= self.j1 < self.j2 <= self.j):
            raise InputError(
                f"need 1 <= J1 < J2 <= J, got J1={self.j1}, J2={self.j2}, J={self.j}"
            )

    @property
    def short_horizons(self) -> np.ndarray:
        return np.arange(1, self.j1)

    @property
    def medium_horizons(self) -> np.ndarray:
        return np.arange(self.j1, self.j2)

    @property
    def long_horizons(self) -> np.ndarray:
        return np.arange(self.j2, self.j + 1)


def ensemble_forecast(cfg: EnsembleConfig, models: dict, ctx: ForecastContext) -> DrawForecast:
    """Assemble the piecewise forecast from the three fitted members.

    Args:
        cfg: thresholds and member ids.
        models: mapping with keys ``short``, ``medium``, ``long`` to
            fitted model objects.
        ctx: prediction context at the forecast origin.

    Returns:
        DrawForecast of length cfg.j; the value at each horizon equals
        the selected member's output at that horizon bit-for-bit.
    """
    for role in ("short", "medium", "long"):
        if models.get(role) is None:
            raise UnfittedModel(f"ensemble member {role!r} is not fitted")
    values = np.empty(cfg.j)
    blocks = (
        (cfg.short_horizons, models["short"]),
        (cfg.medium_horizons, models["medium"]),
        (cfg.long_horizons, models["long"]),
    )
    for js, model in blocks:
        if js.size:
            values[js - 1] = model.predict_horizons(ctx, js)
    return DrawForecast(ctx.k, values)
