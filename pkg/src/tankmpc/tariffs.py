"""Electricity price models: flat, two-tier time-of-use, and day-ahead
hourly prices with mean-normalization offset.

Hourly prices follow a publication rule: the 24 prices for day D become
visible at 15:00 on day D-1. A price window never looks past the
published boundary; beyond it the window repeats the last published
day, which is the controller's best causal guess.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np

from .errors import InputError, MissingHourlyData
from .timeseries import SimClock

FLAT_RATE_DEFAULT = 0.1241        # $/kWh
TOU_PEAK_DEFAULT = 0.251          # $/kWh, 2-8 PM
TOU_OFFPEAK_DEFAULT = 0.082       # $/kWh
TOU_PEAK_START_DEFAULT = 14
TOU_PEAK_END_DEFAULT = 20
PUBLICATION_HOUR = 15             # day-ahead prices post at 3 PM

TARIFF_KINDS = ("flat", "tou", "hourly")


@dataclass(frozen=True)
class Tariff:
    """One of three price structures, selected by ``kind``.

    flat:   ``flat_rate`` at every step.
    tou:    ``peak_rate`` for hours [peak_start_hour, peak_end_hour),
            ``offpeak_rate`` otherwise, every day.
    hourly: per-hour prices from ``hourly_prices`` (date -> 24-vector),
            held constant within each hour and subject to the
            publication rule.
    """

    kind: str = "flat"
    flat_rate: float = FLAT_RATE_DEFAULT
    peak_rate: float = TOU_PEAK_DEFAULT
    offpeak_rate: float = TOU_OFFPEAK_DEFAULT
    peak_start_hour: int = TOU_PEAK_START_DEFAULT
    peak_end_hour: int = TOU_PEAK_END_DEFAULT
    hourly_prices: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TARIFF_KINDS:
            raise InputError(f"unknown tariff kind {self.kind!r}; expected one of {TARIFF_KINDS}")
        if min(self.flat_rate, self.peak_rate, self.offpeak_rate) < 0:
            raise InputError("prices must be nonnegative")
        if not (0 <= self.peak_start_hour < self.peak_end_hour <= 24):
            raise InputError("peak window must lie within one day")
        if self.kind == "hourly":
            for d, vec in self.hourly_prices.items():
                v = np.asarray(vec, float)
                if v.shape != (24,) or not np.all(np.isfinite(v)) or np.any(v < 0):
                    raise InputError(f"hourly prices for {d} must be 24 finite nonnegative values")

    @classmethod
    def flat(cls, rate: float = FLAT_RATE_DEFAULT) -> "Tariff":
        return cls(kind="flat", flat_rate=rate)

    @classmethod
    def tou(cls, peak: float = TOU_PEAK_DEFAULT, offpeak: float = TOU_OFFPEAK_DEFAULT,
            start_hour: int = TOU_PEAK_START_DEFAULT, end_hour: int = TOU_PEAK_END_DEFAULT) -> "Tariff":
        return cls(kind="tou", peak_rate=peak, offpeak_rate=offpeak,
                   peak_start_hour=start_hour, peak_end_hour=end_hour)

    @classmethod
    def hourly(cls, prices: dict) -> "Tariff":
        return cls(kind="hourly", hourly_prices=dict(prices))

    def price_at(self, when: datetime, as_of: datetime | None = None) -> float:
        """Price in effect at wall time ``when``.

        For hourly tariffs, ``as_of`` is the controller's current time;
        only days published by then are visible, and times beyond the
        boundary fall back to the same hour of the last published day.
        """
        if self.kind == "flat":
            return self.flat_rate
        if self.kind == "tou":
            in_peak = self.peak_start_hour <= when.hour < self.peak_end_hour
            return self.peak_rate if in_peak else self.offpeak_rate
        as_of = as_of or when
        day = self._visible_day(when, as_of)
        return float(np.asarray(self.hourly_prices[day], float)[when.hour])

    def _visible_day(self, when: datetime, as_of: datetime):
        last_published = as_of.date() + timedelta(days=1 if as_of.hour >= PUBLICATION_HOUR else 0)
        day = min(when.date(), last_published)
        if day not in self.hourly_prices:
            raise MissingHourlyData(f"no hourly prices for {day.isoformat()}")
        return day


def price_window(tariff: Tariff, clock: SimClock, horizon: int) -> np.ndarray:
    """Per-step prices for steps k .. k+horizon-1 at the clock's step.

    Hourly prices are held constant within the hour; the publication
    rule is applied as of the clock's current wall time, so unpublished
    prices never leak into the window.
    """
    now = clock.now
    out = np.empty(horizon)
    for j in range(horizon):
        out[j] = tariff.price_at(clock.time_at(clock.k + j), as_of=now)
    return out


def normalize_hourly(raw, target_mean: float) -> np.ndarray:
    """Offset-adjust a price vector so its mean equals ``target_mean``
    exactly; pairwise differences between hours are preserved.
    Idempotent: re-normalizing to the same mean is a no-op."""
    v = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InputError("prices must be finite")
    return v + (target_mean - v.mean())


def load_hourly_csv(path) -> dict:
    """Read (date, hour, $/kWh) rows into the hourly price mapping.

    Every date present must have all 24 hours.
    """
    table: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:3]] != ["date", "hour", "price"]:
            raise InputError(f"{path}: expected header 'date,hour,price'")
        for i, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            try:
                d = date.fromisoformat(row[0].strip())
                h = int(row[1])
                price = float(row[2])
            except (ValueError, IndexError) as exc:
                raise InputError(f"{path}: row {i}: bad (date, hour, price)") from exc
            if not (0 <= h < 24):
                raise InputError(f"{path}: row {i}: hour {h} out of range")
            table.setdefault(d, [None] * 24)[h] = price
    for d, vec in table.items():
        missing = [h for h, v in enumerate(vec) if v is None]
        if missing:
            raise MissingHourlyData(f"{path}: {d.isoformat()} missing hours {missing}")
    return {d: np.asarray(vec, float) for d, vec in table.items()}
