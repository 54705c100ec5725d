"""Closed-loop experiment harness and analytics.

A scenario couples one controller mode (the two default baselines, the
constant-60 store, or the receding-horizon controller) with a tariff
and a draw trace, steps the stratified plant at 5-minute resolution,
and reports every summary statistic the comparisons need: energy, cost,
per-litre intensities, comfort windows, daily regressions, and payback
arithmetic.

All modes consume the identical draw trace. The measured span is the
last ``days`` of the trace; the preceding ``training_days`` are a
warm-up prologue, which the receding-horizon mode spends under the
hybrid baseline accumulating draw history for its first model fit
(re-fits then happen at local midnight). The controller sees the same
measurements a field logger would: sensor temperatures at the decision
instant and flow aggregates one interval in arrears.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .draws import DEFAULT_START, DrawScheduleSpec, generate_draws
from .errors import (
    DegenerateData,
    InputError,
    InsufficientData,
    MismatchedSpan,
    NonpositiveSavings,
)
from .forecast import DEFAULT_TAU, EnsembleConfig
from .mpc import DEFAULT_INITIAL_SETPOINT, MpcConfig, MpcController
from .plant import CONSTANT60_SETPOINT, PlantConfig, PlantState, simulate_step
from .tank import TankParams
from .tariffs import Tariff
from .timeseries import CONTROL_STEP, SimClock, TimeSeries

MODES = ("hpowh_default", "hybrid_default", "constant60", "mpc")

_PLANT_MODE = {
    "hpowh_default": "hpowh",
    "hybrid_default": "hybrid",
    "constant60": "constant60",
    "mpc": "external_setpoint",
}

LARGE_DRAW_L = 18.9
COMFORT_FLOOR = 37.7


@dataclass(frozen=True)
class ScenarioSpec:
    """One experiment: mode x tariff x draws, plus all configs."""

    mode: str
    tariff: Tariff = field(default_factory=Tariff.flat)
    draws: object = field(default_factory=DrawScheduleSpec)  # spec or TimeSeries
    days: int = 1
    seed: int = 0
    params: TankParams = field(default_factory=TankParams)
    mpc_config: MpcConfig = field(default_factory=MpcConfig)
    plant_config: PlantConfig = field(default_factory=PlantConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    tau: float = DEFAULT_TAU
    training_days: int = 30
    t_ambient: float = 20.0
    t_inlet: float = 10.0
    baseline_setpoint: float = DEFAULT_INITIAL_SETPOINT
    setpoint_delay_steps: int = 0
    start: datetime = DEFAULT_START

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.days < 1:
            raise InputError("scenario span must be at least one day")
        if self.training_days < 0 or self.setpoint_delay_steps < 0:
            raise InputError("training_days and setpoint delay must be nonnegative")


@dataclass(frozen=True)
class ComfortWindow:
    """A four-hour window anchored at its first large draw event."""

    start_k: int
    start_time: str
    large_draw_count: int
    min_outlet_c: float

    @property
    def violated(self) -> bool:
        return self.min_outlet_c < COMFORT_FLOOR


@dataclass
class ScenarioResult:
    """Per-run ledger over the measured span."""

    mode: str
    tariff_kind: str
    days: int
    seed: int
    start: datetime
    step: timedelta
    traces: dict            # name -> np.ndarray over the measured span
    energy_kwh: float
    cost_usd: float
    volume_l: float
    comfort_events: list
    mpc_log: list | None = None

    @property
    def wh_per_l(self) -> float:
        return 1000.0 * self.energy_kwh / self.volume_l if self.volume_l > 0 else math.nan

    @property
    def usd_per_l(self) -> float:
        return self.cost_usd / self.volume_l if self.volume_l > 0 else math.nan

    def time_at(self, k: int) -> datetime:
        return self.start + k * self.step


def _resolve_draws(spec: ScenarioSpec, total_days: int) -> TimeSeries:
    if isinstance(spec.draws, DrawScheduleSpec):
        return generate_draws(spec.draws, total_days, spec.seed, spec.start - timedelta(days=spec.training_days))
    flow = spec.draws
    if not isinstance(flow, TimeSeries):
        raise InputError("draws must be a DrawScheduleSpec or a TimeSeries")
    needed = total_days * int(round(86400 / flow.step.total_seconds()))
    if len(flow) < needed:
        raise InsufficientData(
            f"draw trace of {len(flow)} steps cannot cover {total_days} days "
            f"(training prologue included)"
        )
    return flow.slice(0, needed)


def run(spec: ScenarioSpec) -> ScenarioResult:
    """Execute one scenario; deterministic given the spec (incl. seed)."""
    dt_h = CONTROL_STEP.total_seconds() / 3600.0
    steps_per_day = int(round(24.0 / dt_h))
    total_days = spec.days + spec.training_days
    flow = _resolve_draws(spec, total_days)
    n_total = total_days * steps_per_day
    n_measured = spec.days * steps_per_day
    k0 = n_total - n_measured
    trace_start = flow.time_at(k0)

    plant_cfg = spec.plant_config
    plant_mode = _PLANT_MODE[spec.mode]
    is_mpc = spec.mode == "mpc"
    state = PlantState.uniform(plant_cfg, spec.baseline_setpoint
                               if spec.mode != "constant60" else CONSTANT60_SETPOINT)

    controller = None
    hist_mdot = np.zeros(n_total)
    hist_tu = np.zeros(n_total)
    hist_tl = np.zeros(n_total)
    if is_mpc:
        controller = MpcController(
            spec.params, spec.mpc_config, spec.ensemble, spec.tau, spec.seed,
            initial_setpoint=spec.baseline_setpoint,
        )
        controller.t_c_est = None

    names = ("draw_kgmin", "t_upper", "t_lower", "outlet_c", "setpoint_c",
             "hp_kw", "element_kw", "total_kw", "price_usd_kwh")
    traces = {n: np.zeros(n_measured) for n in names}
    energy = cost = 0.0
    pending_setpoints: list[float] = []

    i_us = plant_cfg.upper_sensor_node
    i_ls = plant_cfg.lower_sensor_node

    for k in range(n_total):
        when = flow.time_at(k)
        measuring = k >= k0
        # Field-style measurements: temps now, flow one interval in arrears.
        hist_mdot[k] = flow.values[k - 1] if k > 0 else 0.0
        hist_tu[k] = state.temps[i_us]
        hist_tl[k] = state.temps[i_ls]

        in_prologue = is_mpc and not measuring
        step_mode = "hybrid" if in_prologue else plant_mode
        setpoint = spec.baseline_setpoint

        if is_mpc and measuring:
            window = max(0, k + 1 - spec.training_days * steps_per_day)
            history = _history_view(flow, hist_mdot, hist_tu, hist_tl,
                                    spec.t_inlet, window, k)
            if not controller.is_fitted or (when.hour == 0 and when.minute == 0):
                controller.retrain(history)
            clock = SimClock(history["mdot"].start, CONTROL_STEP,
                             k=len(history["mdot"]) - 1)
            decision = controller.step(clock, history, spec.tariff)
            pending_setpoints.append(decision.setpoint)
            if len(pending_setpoints) > spec.setpoint_delay_steps + 1:
                pending_setpoints.pop(0)
            setpoint = pending_setpoints[0]
        elif spec.mode == "constant60":
            setpoint = CONSTANT60_SETPOINT

        draw_kg = float(flow.values[k]) * 5.0
        result = simulate_step(state, setpoint, step_mode, draw_kg,
                               spec.t_ambient, spec.t_inlet, plant_cfg, dt_h)
        state = result.state

        if measuring:
            i = k - k0
            price = spec.tariff.price_at(when, as_of=when)
            traces["draw_kgmin"][i] = flow.values[k]
            traces["t_upper"][i] = hist_tu[k]
            traces["t_lower"][i] = hist_tl[k]
            traces["outlet_c"][i] = result.outlet_t
            traces["setpoint_c"][i] = setpoint
            traces["hp_kw"][i] = result.hp_kw
            traces["element_kw"][i] = result.element_kw
            traces["total_kw"][i] = result.electrical_kw
            traces["price_usd_kwh"][i] = price
            energy += result.electrical_kw * dt_h
            cost += price * result.electrical_kw * dt_h

    volume = float(traces["draw_kgmin"].sum() * 5.0)  # kg ~ L
    result = ScenarioResult(
        mode=spec.mode, tariff_kind=spec.tariff.kind, days=spec.days,
        seed=spec.seed, start=trace_start, step=CONTROL_STEP, traces=traces,
        energy_kwh=energy, cost_usd=cost, volume_l=volume, comfort_events=[],
        mpc_log=controller.log if controller else None,
    )
    result.comfort_events = comfort_windows(result)
    return result


def _history_view(flow, hist_mdot, hist_tu, hist_tl, t_inlet, lo, k):
    start = flow.time_at(lo)
    n = k - lo + 1
    mk = lambda arr, unit: TimeSeries(start, arr[lo: k + 1], unit, flow.step)
    return {
        "mdot": mk(hist_mdot, "kg/min"),
        "T_u": mk(hist_tu, "degC"),
        "T_l": mk(hist_tl, "degC"),
        "T_c": TimeSeries(start, np.full(n, t_inlet), "degC", flow.step),
    }


def comfort_windows(result: ScenarioResult, window_hours: float = 4.0,
                    large_draw_l: float = LARGE_DRAW_L) -> list:
    """Large-draw windows and their minimum draw-time outlet temperature.

    Draw events are maximal runs of nonzero flow; events above
    ``large_draw_l`` are clustered greedily into windows of
    ``window_hours`` anchored at each cluster's first event. Each window
    reports its large-event count and the minimum outlet temperature
    over every draw sample (large or small) inside it.
    """
    flow = result.traces["draw_kgmin"]
    outlet = result.traces["outlet_c"]
    step_min = result.step.total_seconds() / 60.0
    window_steps = int(round(window_hours * 60.0 / step_min))

    events = []
    k = 0
    n = len(flow)
    while k < n:
        if flow[k] > 0:
            j = k
            vol = 0.0
            while j < n and flow[j] > 0:
                vol += flow[j] * step_min
                j += 1
            events.append((k, vol))
            k = j
        else:
            k += 1

    large = [(k, v) for k, v in events if v > large_draw_l]
    windows = []
    i = 0
    while i < len(large):
        anchor = large[i][0]
        count = 0
        while i < len(large) and large[i][0] < anchor + window_steps:
            count += 1
            i += 1
        lo, hi = anchor, min(n, anchor + window_steps)
        in_window = (flow[lo:hi] > 0)
        min_outlet = float(outlet[lo:hi][in_window].min())
        windows.append(ComfortWindow(
            start_k=anchor,
            start_time=result.time_at(anchor).isoformat(),
            large_draw_count=count,
            min_outlet_c=min_outlet,
        ))
    return windows


def daily_energy_volume(result: ScenarioResult) -> tuple[np.ndarray, np.ndarray]:
    """Per-day (volume_l, energy_kwh) over the measured span."""
    steps_per_day = int(round(86400 / result.step.total_seconds()))
    n_days = len(result.traces["total_kw"]) // steps_per_day
    dt_h = result.step.total_seconds() / 3600.0
    kw = result.traces["total_kw"][: n_days * steps_per_day].reshape(n_days, -1)
    fl = result.traces["draw_kgmin"][: n_days * steps_per_day].reshape(n_days, -1)
    return fl.sum(axis=1) * 5.0, kw.sum(axis=1) * dt_h


@dataclass(frozen=True)
class DailyRegression:
    slope: float       # kWh per L
    intercept: float   # kWh
    r2: float


def regress_daily(volumes_l, energies_kwh) -> DailyRegression:
    """Ordinary least squares of daily energy on daily draw volume."""
    x = np.asarray(volumes_l, float)
    y = np.asarray(energies_kwh, float)
    if x.size < 3:
        raise InsufficientData("need at least 3 days for a daily regression")
    if np.ptp(x) == 0:
        raise DegenerateData("all daily volumes are identical")
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DailyRegression(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class Comparison:
    """Savings of run A relative to run B (positive = A cheaper/leaner)."""

    energy_savings_pct: float
    cost_savings_pct: float
    wh_per_l_a: float
    wh_per_l_b: float
    usd_per_l_a: float
    usd_per_l_b: float


def compare(a: ScenarioResult, b: ScenarioResult) -> Comparison:
    """Compare two runs on identical draws and span."""
    if a.days != b.days or len(a.traces["draw_kgmin"]) != len(b.traces["draw_kgmin"]):
        raise MismatchedSpan("runs cover different spans")
    if not np.array_equal(a.traces["draw_kgmin"], b.traces["draw_kgmin"]):
        raise MismatchedSpan("runs consumed different draw traces")
    if a.tariff_kind != b.tariff_kind:
        raise MismatchedSpan("runs priced under different tariffs")
    return Comparison(
        energy_savings_pct=100.0 * (1.0 - a.energy_kwh / b.energy_kwh),
        cost_savings_pct=100.0 * (1.0 - a.cost_usd / b.cost_usd),
        wh_per_l_a=a.wh_per_l, wh_per_l_b=b.wh_per_l,
        usd_per_l_a=a.usd_per_l, usd_per_l_b=b.usd_per_l,
    )


def payback_months(extra_upfront_usd: float, monthly_savings_usd: float) -> float:
    """Simple payback: extra up-front cost over monthly savings."""
    if extra_upfront_usd == 0:
        return 0.0
    if monthly_savings_usd <= 0:
        raise NonpositiveSavings("monthly savings must be positive")
    return extra_upfront_usd / monthly_savings_usd


def window_energy_kwh(result: ScenarioResult, start_hour: int = 14,
                      end_hour: int = 20, trace: str = "hp_kw") -> float:
    """Electrical energy within a daily wall-clock window."""
    dt_h = result.step.total_seconds() / 3600.0
    kw = result.traces[trace]
    hours = np.array([result.time_at(k).hour for k in range(len(kw))])
    mask = (hours >= start_hour) & (hours < end_hour)
    return float(kw[mask].sum() * dt_h)


def hourly_energy_price_correlation(result: ScenarioResult) -> float:
    """Pearson correlation between hourly electrical energy and the
    hourly mean price over the measured span."""
    steps_per_hour = int(round(3600 / result.step.total_seconds()))
    n_hours = len(result.traces["total_kw"]) // steps_per_hour
    kw = result.traces["total_kw"][: n_hours * steps_per_hour].reshape(n_hours, -1)
    pr = result.traces["price_usd_kwh"][: n_hours * steps_per_hour].reshape(n_hours, -1)
    e = kw.mean(axis=1)
    p = pr.mean(axis=1)
    if np.std(e) == 0 or np.std(p) == 0:
        raise DegenerateData("constant energy or price; correlation undefined")
    return float(np.corrcoef(e, p)[0, 1])


# ---------------------------------------------------------------------------
# Result directory emission
# ---------------------------------------------------------------------------

def summary_dict(result: ScenarioResult) -> dict:
    violations = [w for w in result.comfort_events if w.violated]
    return {
        "mode": result.mode,
        "tariff": result.tariff_kind,
        "days": result.days,
        "seed": result.seed,
        "start": result.start.isoformat(),
        "energy_kwh": result.energy_kwh,
        "cost_usd": result.cost_usd,
        "volume_l": result.volume_l,
        "wh_per_l": result.wh_per_l,
        "usd_per_l": result.usd_per_l,
        "comfort_windows": len(result.comfort_events),
        "comfort_violations": len(violations),
        "min_outlet_c": (min(w.min_outlet_c for w in result.comfort_events)
                         if result.comfort_events else None),
    }


def write_result_dir(result: ScenarioResult, out_dir, verbose_plans: bool = False) -> Path:
    """Emit traces.csv, summary.json, comfort_events.csv (and the
    controller log for mpc runs) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "traces.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        names = list(result.traces)
        writer.writerow(["timestamp"] + names)
        for k in range(len(result.traces["draw_kgmin"])):
            writer.writerow([result.time_at(k).isoformat()]
                            + [repr(float(result.traces[n][k])) for n in names])

    with open(out / "summary.json", "w") as fh:
        json.dump(summary_dict(result), fh, sort_keys=True, indent=2)
        fh.write("\n")

    with open(out / "comfort_events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_time", "large_draw_count", "min_outlet_c", "violated"])
        for w in result.comfort_events:
            writer.writerow([w.start_time, w.large_draw_count,
                             repr(w.min_outlet_c), int(w.violated)])

    if result.mpc_log is not None:
        with open(out / "mpc_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "setpoint_c", "setpoint_f", "objective_usd",
                             "energy_usd", "comfort_usd", "bacteria_usd",
                             "solve_seconds", "fault"])
            for d in result.mpc_log:
                s = d.solution
                writer.writerow([
                    d.k, repr(d.setpoint), d.setpoint_f,
                    repr(s.objective_value) if s else "",
                    repr(s.energy_cost) if s else "",
                    repr(s.comfort_penalty) if s else "",
                    repr(s.bacteria_penalty) if s else "",
                    repr(s.solve_seconds) if s else "",
                    d.fault or "",
                ])
        if verbose_plans:
            plans = out / "plans"
            plans.mkdir(exist_ok=True)
            for d in result.mpc_log:
                if d.solution is None:
                    continue
                with open(plans / f"plan_{d.k:06d}.json", "w") as fh:
                    json.dump({
                        "k": d.k,
                        "setpoint_c": d.setpoint,
                        "t_u_plan": list(d.solution.t_u_plan),
                        "t_l_plan": list(d.solution.t_l_plan),
                        "q_plan": list(d.solution.q_plan),
                        "t_s_plan": list(d.solution.t_s_plan),
                    }, fh, sort_keys=True)
    return out


def write_comparison_csv(path, comparison: Comparison, label_a: str, label_b: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", label_a, label_b])
        writer.writerow(["wh_per_l", repr(comparison.wh_per_l_a), repr(comparison.wh_per_l_b)])
        writer.writerow(["usd_per_l", repr(comparison.usd_per_l_a), repr(comparison.usd_per_l_b)])
        writer.writerow(["energy_savings_pct", repr(comparison.energy_savings_pct), ""])
        writer.writerow(["cost_savings_pct", repr(comparison.cost_savings_pct), ""])
