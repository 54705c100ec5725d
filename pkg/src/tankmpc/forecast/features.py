"""Feature engineering for hot-water draw forecasting.

Each forecast origin k is described by cyclical encodings of local hour
and weekday, two draw-recency features controlled by a flow threshold
tau, the current flow, and the current node temperatures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientHistory, InputError
from ..timeseries import TimeSeries

#: Default draw threshold tau, kg/min (aligned with the controller's
#: flow threshold phi).
DEFAULT_TAU = 0.75

#: Past-hour window for the draw-count feature, in 5-min steps.
RECENT_WINDOW = 12

#: Cap on the steps-since-draw feature; unbounded recency values
#: destabilize tree splits.
SINCE_CAP = 288

FEATURE_NAMES = (
    "sin_h", "cos_h", "sin_w", "cos_w",
    "recent_draw_count", "steps_since_draw",
    "mdot_now", "t_u_now", "t_l_now",
)


@dataclass(frozen=True)
class ForecastFeatureRow:
    sin_h: float
    cos_h: float
    sin_w: float
    cos_w: float
    recent_draw_count: int
    steps_since_draw: int
    mdot_now: float
    t_u_now: float
    t_l_now: float

    def __post_init__(self):
        if abs(self.sin_h**2 + self.cos_h**2 - 1.0) > 1e-12:
            raise InputError("hour encoding is off the unit circle")
        if abs(self.sin_w**2 + self.cos_w**2 - 1.0) > 1e-12:
            raise InputError("weekday encoding is off the unit circle")
        if not (0 <= self.recent_draw_count <= RECENT_WINDOW):
            raise InputError("recent_draw_count out of range")
        if self.steps_since_draw < 1:
            raise InputError("steps_since_draw must be >= 1")

    def as_array(self) -> np.ndarray:
        return np.array([
            self.sin_h, self.cos_h, self.sin_w, self.cos_w,
            float(self.recent_draw_count), float(self.steps_since_draw),
            self.mdot_now, self.t_u_now, self.t_l_now,
        ])


def _clock_arrays(flow: TimeSeries, ks: np.ndarray):
    """Fractional local hour and integer weekday for step indices ks."""
    t0 = flow.start
    step_s = flow.step.total_seconds()
    sec_into_day = t0.hour * 3600 + t0.minute * 60 + t0.second
    abs_s = sec_into_day + ks * step_s
    hour = (abs_s % 86400.0) / 3600.0
    weekday = (t0.weekday() + np.floor(abs_s / 86400.0).astype(int)) % 7
    return hour, weekday


def build_feature_matrix(history: dict[str, TimeSeries], ks,
                         tau: float = DEFAULT_TAU) -> np.ndarray:
    """Feature rows for many origins at once.

    Args:
        history: bundle with the flow under ``mdot`` (kg/min) and,
            optionally, node temperatures ``T_u``/``T_l``.
        ks: origin step indices; each needs 12 steps of prior flow.
        tau: draw threshold, kg/min.

    Returns:
        (len(ks), 9) feature matrix ordered as FEATURE_NAMES.
    """
    flow = history["mdot"]
    ks = np.asarray(ks, dtype=int)
    if ks.size and (ks.min() < RECENT_WINDOW or ks.max() >= len(flow)):
        raise InsufficientHistory(
            f"origins must lie in [{RECENT_WINDOW}, {len(flow) - 1}]"
        )
    hour, weekday = _clock_arrays(flow, ks)
    draws = flow.values >= tau
    csum = np.concatenate([[0], np.cumsum(draws)])
    count = csum[ks] - csum[ks - RECENT_WINDOW]

    draw_idx = np.flatnonzero(draws)
    # Most recent draw strictly before each origin; cap when none.
    pos = np.searchsorted(draw_idx, ks, side="left") - 1
    since = np.full(ks.shape, SINCE_CAP, dtype=int)
    has = pos >= 0
    since[has] = np.minimum(ks[has] - draw_idx[pos[has]], SINCE_CAP)

    x = np.empty((ks.size, len(FEATURE_NAMES)))
    x[:, 0] = np.sin(2 * np.pi * hour / 24.0)
    x[:, 1] = np.cos(2 * np.pi * hour / 24.0)
    x[:, 2] = np.sin(2 * np.pi * weekday / 7.0)
    x[:, 3] = np.cos(2 * np.pi * weekday / 7.0)
    x[:, 4] = count
    x[:, 5] = since
    x[:, 6] = flow.values[ks]
    x[:, 7] = history["T_u"].values[ks] if "T_u" in history else 0.0
    x[:, 8] = history["T_l"].values[ks] if "T_l" in history else 0.0
    return x


def build_features(history: dict[str, TimeSeries], k: int,
                   tau: float = DEFAULT_TAU) -> ForecastFeatureRow:
    """Feature row at a single origin k (needs 12 steps of prior flow)."""
    row = build_feature_matrix(history, np.array([k]), tau)[0]
    return ForecastFeatureRow(
        sin_h=float(row[0]), cos_h=float(row[1]),
        sin_w=float(row[2]), cos_w=float(row[3]),
        recent_draw_count=int(row[4]), steps_since_draw=int(row[5]),
        mdot_now=float(row[6]), t_u_now=float(row[7]), t_l_now=float(row[8]),
    )
