"""Uniformly sampled, timestamped scalar signals and CSV ingestion.

Everything downstream (tank model, forecasting, MPC, plant simulation)
consumes :class:`TimeSeries` at the canonical 5-minute control step.
Higher-rate recordings (e.g. 1-minute loggers) are resampled on
ingestion with the mass-conserving rule in :func:`resample`.

Unit conventions: flows in kg/min, temperatures in degC, power in kW,
prices in $/kWh, volumes in L. Temperatures live in degC everywhere;
degF appears only at the set-point quantization boundary in the
controller.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import (
    GapTooLarge,
    InputError,
    MissingColumn,
    NonIntegerRatio,
    NonMonotoneTimestamps,
)

#: Canonical control step used by every module.
CONTROL_STEP = timedelta(minutes=5)

#: Recognized unit tags.
UNITS = ("kg/min", "degC", "kW", "$/kWh", "L")

#: Units whose gaps are zero-filled on ingestion (no draw is the common
#: state for flows); all other units are linearly interpolated.
ZERO_FILL_UNITS = ("kg/min",)


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled scalar signal.

    Values are stored as a read-only float64 array; instances are
    immutable and safe to share across threads.
    """

    start: datetime
    values: np.ndarray
    unit: str
    step: timedelta = CONTROL_STEP

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise InputError("TimeSeries needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise InputError("TimeSeries values must be finite")
        if self.step <= timedelta(0):
            raise InputError("TimeSeries step must be positive")
        if self.unit not in UNITS:
            raise InputError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def time_at(self, k: int) -> datetime:
        """Wall time of sample ``k``."""
        return self.start + k * self.step

    @property
    def end(self) -> datetime:
        """Wall time of the last sample."""
        return self.time_at(len(self) - 1)

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        """Same clock and unit, new values."""
        return TimeSeries(self.start, np.asarray(values, float), self.unit, self.step)

    def slice(self, k0: int, k1: int) -> "TimeSeries":
        """Samples ``k0 <= k < k1`` as a new series."""
        if not (0 <= k0 < k1 <= len(self)):
            raise InputError(f"slice [{k0}, {k1}) out of range for length {len(self)}")
        return TimeSeries(self.time_at(k0), self.values[k0:k1], self.unit, self.step)


@dataclass
class SimClock:
    """Discrete simulation clock: wall time of step ``k`` is exactly
    ``origin + k * step``."""

    origin: datetime
    step: timedelta = CONTROL_STEP
    k: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise InputError("SimClock step index must be nonnegative")

    @property
    def now(self) -> datetime:
        return self.origin + self.k * self.step

    def time_at(self, k: int) -> datetime:
        return self.origin + k * self.step

    def tick(self, n: int = 1) -> None:
        self.k += n

    @property
    def step_hours(self) -> float:
        return self.step.total_seconds() / 3600.0


def _parse_timestamp(text: str, row: int) -> datetime:
    # fromisoformat on 3.10 rejects a trailing 'Z'; normalize it.
    try:
        return datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise InputError(f"row {row}: bad ISO-8601 timestamp {text!r}") from exc


def ingest_csv(path, schema: dict[str, str], gap_limit: int = 2) -> dict[str, TimeSeries]:
    """Read a timestamped CSV into one TimeSeries per declared column.

    The file must have a header ``timestamp,<name>[,<name>...]`` with
    strictly increasing ISO-8601 timestamps. Missing rows (gaps) up to
    ``gap_limit`` steps are filled: zero for flow columns, linear
    interpolation otherwise. Larger gaps raise :class:`GapTooLarge`.

    Args:
        path: CSV file path.
        schema: column name -> unit tag for every column to ingest.
        gap_limit: maximum fillable gap, in steps of the inferred grid.

    Returns:
        Mapping column name -> TimeSeries.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    if not rows:
        raise InputError(f"{path}: no data rows")
    if header[0].strip() != "timestamp":
        raise InputError(f"{path}: first column must be 'timestamp', got {header[0]!r}")
    col_index = {name.strip(): i for i, name in enumerate(header)}
    for name in schema:
        if name not in col_index:
            raise MissingColumn(f"{path}: column {name!r} not in header {header}")

    times = [_parse_timestamp(row[0], i + 2) for i, row in enumerate(rows)]
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            raise NonMonotoneTimestamps(
                f"{path}: row {i + 2}: timestamp {times[i].isoformat()} does not "
                f"increase past {times[i - 1].isoformat()}"
            )

    if len(times) == 1:
        step = CONTROL_STEP
    else:
        step = min(t1 - t0 for t0, t1 in zip(times, times[1:]))

    # Place every row on the uniform grid implied by the smallest gap.
    offsets = []
    for i, t in enumerate(times):
        delta = t - times[0]
        steps, rem = divmod(delta, step)
        if rem:
            raise InputError(
                f"{path}: row {i + 2}: timestamp {t.isoformat()} is off the "
                f"{step} grid"
            )
        offsets.append(steps)

    n = offsets[-1] + 1
    out: dict[str, TimeSeries] = {}
    for name, unit in schema.items():
        idx = col_index[name]
        raw = np.full(n, np.nan)
        for i, row in enumerate(rows):
            try:
                raw[offsets[i]] = float(row[idx])
            except (ValueError, IndexError) as exc:
                raise InputError(
                    f"{path}: row {i + 2}, column {name!r}: bad value"
                ) from exc
        filled = _fill_gaps(raw, unit, gap_limit, name, times[0], step, path)
        out[name] = TimeSeries(times[0], filled, unit, step)
    return out


def _fill_gaps(raw, unit, gap_limit, name, start, step, path):
    present = np.flatnonzero(~np.isnan(raw))
    gaps = np.diff(present) - 1
    too_big = np.flatnonzero(gaps > gap_limit)
    if too_big.size:
        i = present[too_big[0]]
        when = (start + int(i + 1) * step).isoformat()
        raise GapTooLarge(
            f"{path}: column {name!r}: gap of {int(gaps[too_big[0]])} steps "
            f"starting {when} exceeds limit {gap_limit}"
        )
    if present.size == len(raw):
        return raw
    missing = np.isnan(raw)
    if unit in ZERO_FILL_UNITS:
        filled = raw.copy()
        filled[missing] = 0.0
    else:
        x = np.arange(len(raw))
        filled = raw.copy()
        filled[missing] = np.interp(x[missing], x[~missing], raw[~missing])
    return filled


def write_csv(path, series: dict[str, TimeSeries]) -> None:
    """Write aligned series to CSV so that a clean ingest round-trips.

    All series must share start, step, and length. Floats are written
    with shortest round-trip repr.
    """
    items = list(series.items())
    first = items[0][1]
    for name, ts in items[1:]:
        if ts.start != first.start or ts.step != first.step or len(ts) != len(first):
            raise InputError(f"series {name!r} is not aligned with {items[0][0]!r}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + [name for name, _ in items])
        for k in range(len(first)):
            row = [first.time_at(k).isoformat()]
            row += [repr(float(ts.values[k])) for _, ts in items]
            writer.writerow(row)


def resample(ts: TimeSeries, new_step: timedelta) -> TimeSeries:
    """Downsample to a coarser grid by bin means.

    Bin means conserve drawn mass for flows (kg/min averaged over the
    bin times the bin duration equals the summed per-sample mass) and
    are the natural aggregate for temperatures, prices, and power.
    ``new_step`` must be an integer multiple of ``ts.step``; a trailing
    partial bin is dropped.
    """
    ratio, rem = divmod(new_step, ts.step)
    if rem or ratio < 1:
        raise NonIntegerRatio(
            f"new step {new_step} is not an integer multiple of {ts.step}"
        )
    if ratio == 1:
        return ts
    n_bins = len(ts) // ratio
    if n_bins < 1:
        raise InputError("series shorter than one resample bin")
    binned = ts.values[: n_bins * ratio].reshape(n_bins, ratio).mean(axis=1)
    return TimeSeries(ts.start, binned, ts.unit, new_step)
