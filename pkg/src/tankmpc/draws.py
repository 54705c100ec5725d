"""Seeded synthetic hot-water draw schedules.

Events are generated per day (showers, washer/dishwasher runs, small
draws) with morning/evening start-time peaks, laid out at 1-minute
resolution, and resampled to the 5-minute control grid (conserving
mass). Daily totals are kept inside a configured band by re-drawing a
day's events; generation is fully deterministic given the seed.

The consecutive-shower preset adds two fixed 50 L showers 90 minutes
apart (07:00 and 08:30) every day on top of the background schedule —
the stress pattern that defeats reactive heat-pump-only control.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import InputError
from .timeseries import CONTROL_STEP, TimeSeries, resample

DEFAULT_START = datetime(2024, 6, 1, 0, 0, tzinfo=timezone(timedelta(hours=-5)))


@dataclass(frozen=True)
class DrawScheduleSpec:
    """Event statistics for one household's synthetic schedule."""

    shower_count_choices: tuple = (1, 2, 3)
    shower_count_probs: tuple = (0.3, 0.5, 0.2)
    shower_volume_range: tuple = (30.0, 60.0)    # L
    shower_rate_l_min: float = 8.0
    morning_frac: float = 0.65                   # shower is morning vs evening
    morning_hour: float = 7.2
    morning_sd: float = 0.9
    evening_hour: float = 19.8
    evening_sd: float = 1.2
    washer_prob: float = 0.6                     # per day
    washer_volume_range: tuple = (15.0, 30.0)
    washer_rate_l_min: float = 6.0
    small_draws_mean: float = 11.0               # Poisson per day
    small_volume_range: tuple = (0.5, 5.0)
    small_rate_range: tuple = (1.0, 4.0)
    daily_band_l: tuple = (100.0, 290.0)
    consecutive_showers: bool = False
    consecutive_volume_l: float = 50.0
    consecutive_times_h: tuple = (7.0, 8.5)
    # Morning-routine small draws around the consecutive showers
    # (faucets, dishes); each stays below the large-draw threshold.
    cluster_volume_l: float = 60.0
    cluster_window_h: tuple = (6.5, 10.25)
    cluster_draw_l: tuple = (6.0, 12.0)

    def __post_init__(self):
        if len(self.shower_count_choices) != len(self.shower_count_probs):
            raise InputError("shower count choices/probs length mismatch")
        if not np.isclose(sum(self.shower_count_probs), 1.0):
            raise InputError("shower count probabilities must sum to 1")
        if self.daily_band_l[0] >= self.daily_band_l[1]:
            raise InputError("daily band must be a nonempty interval")


def consecutive_shower_spec(**overrides) -> DrawScheduleSpec:
    """The Fig-5-style stress preset: two 50 L showers at 07:00 and
    08:30 daily, plus the regular background schedule."""
    return DrawScheduleSpec(consecutive_showers=True, **overrides)


def _day_events(spec: DrawScheduleSpec, rng: np.random.Generator):
    """One day's events as (start_minute, volume_l, rate_l_min)."""
    events = []
    if spec.consecutive_showers:
        for t_h in spec.consecutive_times_h:
            events.append((t_h * 60.0, spec.consecutive_volume_l, spec.shower_rate_l_min))
        # Morning-routine cluster: many sub-threshold draws in the window.
        target = spec.cluster_volume_l * rng.uniform(0.92, 1.08)
        drawn = 0.0
        while drawn < target:
            vol = min(rng.uniform(*spec.cluster_draw_l), target - drawn + 1.0)
            start_h = rng.uniform(*spec.cluster_window_h)
            events.append((start_h * 60.0, vol, rng.uniform(2.0, 5.0)))
            drawn += vol
        n_showers = 1 if rng.uniform() < 0.5 else 0  # background evening shower
        shower_slots = ["evening"] * n_showers
    else:
        n_showers = rng.choice(spec.shower_count_choices, p=spec.shower_count_probs)
        shower_slots = [
            "morning" if rng.uniform() < spec.morning_frac else "evening"
            for _ in range(n_showers)
        ]
    for slot in shower_slots:
        if slot == "morning":
            start_h = rng.normal(spec.morning_hour, spec.morning_sd)
        else:
            start_h = rng.normal(spec.evening_hour, spec.evening_sd)
        start_h = float(np.clip(start_h, 5.0, 23.0))
        vol = rng.uniform(*spec.shower_volume_range)
        events.append((start_h * 60.0, vol, spec.shower_rate_l_min))
    if rng.uniform() < spec.washer_prob:
        start_h = float(np.clip(rng.normal(17.5, 2.5), 9.0, 22.0))
        events.append((start_h * 60.0, rng.uniform(*spec.washer_volume_range),
                       spec.washer_rate_l_min))
    n_small = rng.poisson(spec.small_draws_mean)
    for _ in range(n_small):
        start_h = float(np.clip(rng.normal(13.0, 5.5), 0.0, 23.9))
        events.append((start_h * 60.0, rng.uniform(*spec.small_volume_range),
                       rng.uniform(*spec.small_rate_range)))
    return events


def _fill_minutes(events, minutes: np.ndarray, day_offset_min: int) -> None:
    for start_min, vol, rate in events:
        m = day_offset_min + int(start_min)
        remaining = vol
        while remaining > 1e-12 and m < minutes.size:
            put = min(rate, remaining)
            minutes[m] += put
            remaining -= put
            m += 1


def generate_draws(spec: DrawScheduleSpec, days: int, seed: int = 0,
                   start: datetime = DEFAULT_START) -> TimeSeries:
    """Seeded, reproducible 5-minute draw flow series in kg/min.

    Each day's events are re-drawn (up to a bounded number of attempts)
    until the daily total falls inside the configured band; the
    consecutive-shower preset's fixed events are never re-drawn.
    """
    if days < 1:
        raise InputError("need at least one day")
    if start.minute % 5 or start.second:
        raise InputError("start must fall on the 5-minute grid")
    rng = np.random.default_rng(seed)
    minutes = np.zeros(days * 1440)
    for d in range(days):
        for _ in range(40):
            events = _day_events(spec, rng)
            total = sum(v for _, v, _ in events)
            if spec.daily_band_l[0] <= total <= spec.daily_band_l[1]:
                break
        else:
            # Scale shower/washer volumes onto the band edge as a last resort.
            lo, hi = spec.daily_band_l
            target = min(max(total, lo), hi)
            scale = target / total if total > 0 else 1.0
            events = [(t, v * scale, r) for t, v, r in events]
        _fill_minutes(events, minutes, d * 1440)
    one_min = TimeSeries(start, minutes, "kg/min", timedelta(minutes=1))
    return resample(one_min, CONTROL_STEP)


def daily_volumes(flow: TimeSeries) -> np.ndarray:
    """Litres drawn per whole day of the series."""
    step_min = flow.step.total_seconds() / 60.0
    per_day = int(round(1440.0 / step_min))
    n_days = len(flow) // per_day
    mass = flow.values[: n_days * per_day].reshape(n_days, per_day) * step_min
    return mass.sum(axis=1)
