"""Grid-search identification of the two-node model parameters.

Capacitance and insulation come from datasheets; the remaining four
parameters (COP eta, stratification-layer thickness h_s, heat split
lambda, thermocline fraction z) are tuned by joint grid search against
measured data. Each candidate is scored by an open-loop rollout that is
re-initialized from measurements at local midnight: the candidate model
runs under a simulated hysteresis thermostat at the unit's recorded
set-point, producing predicted power and upper-node temperature traces.
The objective is the unweighted sum of the two mean relative absolute
errors, each normalized by the measured signal's mean over the window
(instantaneous power is frequently zero, so per-sample relative error
is ill-defined).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid, InsufficientData, InputError
from .tank import KG_MIN_TO_KG_H, TankParams, TankState, discretize_batch
from .timeseries import TimeSeries

#: Signals the tuner consumes, all 5-minute TimeSeries.
REQUIRED_SIGNALS = ("P", "T_u", "T_l", "mdot", "T_a", "T_c")

MIN_TUNING_DAYS = 14


def _default_eta():
    return tuple(round(1.0 + 0.1 * i, 1) for i in range(41))  # 1.0 .. 5.0


def _default_h_s():
    return tuple(round(0.005 + 0.01 * i, 3) for i in range(10))  # 0.005 .. 0.095


def _default_unit():
    return tuple(round(0.1 * i, 1) for i in range(11))  # 0.0 .. 1.0


@dataclass(frozen=True)
class TuningGrid:
    """Candidate values for the joint grid search.

    z candidates 0 and 1 are dropped automatically (they divide by zero
    in the model matrices); lambda endpoints are allowed.
    """

    eta: tuple = field(default_factory=_default_eta)
    h_s: tuple = field(default_factory=_default_h_s)
    lam: tuple = field(default_factory=_default_unit)
    z: tuple = field(default_factory=_default_unit)

    def __post_init__(self):
        z_ok = tuple(v for v in self.z if 0.0 < v < 1.0)
        object.__setattr__(self, "z", z_ok)
        if not (self.eta and self.h_s and self.lam and self.z):
            raise EmptyGrid("every grid axis needs at least one usable candidate")

    def candidates(self):
        """All grid points in lexicographic (eta, h_s, lam, z) order."""
        return itertools.product(self.eta, self.h_s, self.lam, self.z)

    def __len__(self):
        return len(self.eta) * len(self.h_s) * len(self.lam) * len(self.z)


def _check_bundle(data: dict[str, TimeSeries]) -> int:
    for name in REQUIRED_SIGNALS:
        if name not in data:
            raise InputError(f"tuning bundle missing signal {name!r}")
    n = len(data["P"])
    first = data["P"]
    for name in REQUIRED_SIGNALS:
        ts = data[name]
        if len(ts) != n or ts.start != first.start or ts.step != first.step:
            raise InputError(f"signal {name!r} is not aligned with 'P'")
    steps_per_day = int(round(86400 / first.step.total_seconds()))
    if n < MIN_TUNING_DAYS * steps_per_day:
        raise InsufficientData(
            f"need at least {MIN_TUNING_DAYS} days of data "
            f"({MIN_TUNING_DAYS * steps_per_day} samples), got {n}"
        )
    return n


def _midnight_reinit_indices(ts: TimeSeries) -> np.ndarray:
    """Indices at which the rollout re-initializes: sample 0 plus every
    sample falling exactly on local midnight."""
    idx = [0]
    for k in range(1, len(ts)):
        t = ts.time_at(k)
        if t.hour == 0 and t.minute == 0 and t.second == 0:
            idx.append(k)
    return np.asarray(idx, dtype=int)


def _rollout_errors(candidate: TankParams, arrays, reinit, setpoint, deadband):
    """Simulated-thermostat rollout of one candidate; returns summed
    absolute power and upper-temperature errors."""
    p_meas, t_u_meas, t_l_meas, a_b, b_b, w_b = arrays
    n = len(p_meas)
    q_on = candidate.q_max
    p_on = candidate.P_max
    half = 0.5 * candidate.P_max

    a11 = a_b[:, 0, 0]; a12 = a_b[:, 0, 1]; a21 = a_b[:, 1, 0]; a22 = a_b[:, 1, 1]
    b1 = b_b[:, 0]; b2 = b_b[:, 1]
    w1 = w_b[:, 0]; w2 = w_b[:, 1]

    err_p = 0.0
    err_tu = 0.0
    reinit_set = set(int(i) for i in reinit)
    t_u = t_l = 0.0
    on = False
    for k in range(n):
        if k in reinit_set:
            t_u = float(t_u_meas[k])
            t_l = float(t_l_meas[k])
            on = bool(p_meas[k] >= half)
        else:
            if on:
                if t_u >= setpoint:
                    on = False
            elif t_u < setpoint - deadband:
                on = True
        q = q_on if on else 0.0
        err_p += abs((p_on if on else 0.0) - p_meas[k])
        err_tu += abs(t_u - t_u_meas[k])
        t_u, t_l = (
            a11[k] * t_u + a12[k] * t_l + b1[k] * q + w1[k],
            a21[k] * t_u + a22[k] * t_l + b2[k] * q + w2[k],
        )
    return err_p, err_tu


def candidate_objective(candidate: TankParams, data: dict[str, TimeSeries],
                        setpoint: float, deadband: float) -> float:
    """Tuning objective for one parameter set: sum of the mean absolute
    power and upper-temperature errors, each divided by the measured
    signal's mean."""
    n = len(data["P"])
    dt_h = data["P"].step.total_seconds() / 3600.0
    mdot_kg_h = data["mdot"].values * KG_MIN_TO_KG_H
    a_b, b_b, w_b = discretize_batch(
        candidate, mdot_kg_h, data["T_a"].values, data["T_c"].values, dt_h
    )
    reinit = _midnight_reinit_indices(data["P"])
    arrays = (data["P"].values, data["T_u"].values, data["T_l"].values, a_b, b_b, w_b)
    err_p, err_tu = _rollout_errors(candidate, arrays, reinit, setpoint, deadband)
    p_mean = float(np.mean(data["P"].values))
    tu_mean = float(np.mean(data["T_u"].values))
    if p_mean <= 0 or tu_mean <= 0:
        raise InsufficientData("tuning data has no heating activity or zero-mean T_u")
    return (err_p / n) / p_mean + (err_tu / n) / tu_mean


def tune_parameters(data: dict[str, TimeSeries], grid: TuningGrid,
                    base: TankParams | None = None,
                    setpoint: float = 48.9, deadband: float = 2.8,
                    n_jobs: int = 1) -> TankParams:
    """Joint grid search for (eta, h_s, lambda, z).

    Args:
        data: measured bundle with keys P, T_u, T_l, mdot, T_a, T_c
            (5-min TimeSeries; P in kW, mdot in kg/min, temps in degC).
        grid: candidate values per axis.
        base: fixed parameters (C, R_a, P_max, geometry); defaults to
            the reference profile.
        setpoint: thermostat set-point the unit ran at while the data
            was recorded, degC.
        deadband: thermostat hysteresis width, degC.
        n_jobs: parallel workers over grid points; the reduction is a
            deterministic minimum with lexicographic tie-break, so the
            result is independent of scheduling.

    Returns:
        TankParams at the minimizing grid point.
    """
    _check_bundle(data)
    base = base or TankParams()
    cands = list(grid.candidates())

    def make(c):
        eta, h_s, lam, z = c
        return base.replace(eta=eta, h_s=h_s, lam=lam, z=z, R_ul=None)

    if n_jobs == 1:
        objs = [candidate_objective(make(c), data, setpoint, deadband) for c in cands]
    else:
        from joblib import Parallel, delayed

        objs = Parallel(n_jobs=n_jobs)(
            delayed(candidate_objective)(make(c), data, setpoint, deadband)
            for c in cands
        )

    best_i = 0
    for i in range(1, len(objs)):
        if objs[i] < objs[best_i]:  # ties keep the earlier lexicographic point
            best_i = i
    return make(cands[best_i])


def simulate_measurements(params: TankParams, flow: TimeSeries,
                          t_a: float, t_c: float,
                          setpoint: float = 48.9, deadband: float = 2.8,
                          init: TankState | None = None) -> dict[str, TimeSeries]:
    """Generate a synthetic measurement bundle with the two-node model
    itself as the plant, run under the default hysteresis thermostat.

    Used for tuner self-consistency tests and the bundled synthetic
    tuning dataset: feeding the output back through tune_parameters
    recovers the generating grid point exactly.
    """
    n = len(flow)
    dt_h = flow.step.total_seconds() / 3600.0
    a_b, b_b, w_b = discretize_batch(params, flow.values * KG_MIN_TO_KG_H, t_a, t_c, dt_h)
    state = init or TankState(setpoint, setpoint)
    t_u = np.empty(n); t_l = np.empty(n); power = np.empty(n)
    x_u, x_l = state.t_u, state.t_l
    on = False
    for k in range(n):
        if on:
            if x_u >= setpoint:
                on = False
        elif x_u < setpoint - deadband:
            on = True
        q = params.q_max if on else 0.0
        t_u[k] = x_u
        t_l[k] = x_l
        power[k] = params.P_max if on else 0.0
        x_u, x_l = (
            a_b[k, 0, 0] * x_u + a_b[k, 0, 1] * x_l + b_b[k, 0] * q + w_b[k, 0],
            a_b[k, 1, 0] * x_u + a_b[k, 1, 1] * x_l + b_b[k, 1] * q + w_b[k, 1],
        )
    mk = lambda vals, unit: TimeSeries(flow.start, vals, unit, flow.step)
    return {
        "P": mk(power, "kW"),
        "T_u": mk(t_u, "degC"),
        "T_l": mk(t_l, "degC"),
        "mdot": flow,
        "T_a": mk(np.full(n, t_a), "degC"),
        "T_c": mk(np.full(n, t_c), "degC"),
    }
