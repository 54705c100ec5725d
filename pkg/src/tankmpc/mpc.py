"""Receding-horizon set-point optimization.

Each control step solves a linear program over a 24 h horizon of
5-minute steps. The plan trades off energy cost against soft comfort
and bacteria-growth penalties:

* energy:   (dt/eta) * sum_j price(k+j) * q(j|k)
* comfort:  gamma*dt * sum_j (T_min - T_u(j|k))_+
* bacteria: gamma*dt * sum_j pi(j|k) * (T_bact - (T_u+T_l)/2)_+

subject to the measured initial state, the exact discretized tank
dynamics built from the draw forecast, first-order set-point tracking
of the upper node, the set-point ceiling, and heat-pump capacity.
Positive parts become epigraph slack variables, keeping the problem a
standard-form LP. The binary schedule pi disables the bacteria penalty
during and shortly after forecasted medium/large draws so the
controller does not overheat the tank mid-shower.

The first planned set-point is implemented after rounding to an integer
degF and clamping to the unit's accepted range; the minimum set-point
is deliberately absent from the LP (it would make the simplified
tracking model infeasible) and applied only in this post-processing.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import Infeasible, InputError, SolverFailure, TankMpcError
from .forecast import (
    DEFAULT_TAU,
    DrawForecast,
    EnsembleConfig,
    ForecastContext,
    build_feature_matrix,
    build_training_table,
    ensemble_forecast,
    fit,
)
from .lp import LpProblem, LpResult, solve_lp
from .tank import KG_MIN_TO_KG_H, DiscreteSystem, TankParams, TankState, discretize_batch
from .tariffs import Tariff, price_window
from .timeseries import SimClock, TimeSeries

#: Stand-in max price when every price in the horizon is zero; keeps the
#: penalty weight strictly positive so comfort/bacteria terms stay active.
GAMMA_PRICE_FLOOR = 1e-3

DEFAULT_INITIAL_SETPOINT = 48.9  # degC; the unit's factory set-point


def c_to_f(t: float) -> float:
    return t * 9.0 / 5.0 + 32.0


def f_to_c(t: float) -> float:
    return (t - 32.0) * 5.0 / 9.0


@dataclass(frozen=True)
class MpcConfig:
    """Controller constants; defaults follow the reference deployment."""

    horizon: int = 288              # J, steps
    t_min: float = 37.7             # comfort floor, degC
    t_bact: float = 48.8            # bacteria threshold, degC
    t_s_max: float = 60.0           # set-point ceiling inside the LP, degC
    t_s_min_apply: float = 43.3     # post-processing floor, degC
    a: float = 0.8                  # set-point tracking weight
    gamma_multiplier: float = 10.0  # penalty weight = multiplier * max price
    phi: float = 0.75               # large-draw flow threshold, kg/min
    phi_mass: float = 18.0          # rolling-mass threshold Phi, kg
    bact_window: int = 24           # rolling window for Phi, steps
    bact_lookback: int = 4          # spike lookback for phi, steps
    t_a_hat: float = 18.3           # forecast ambient (thermostat - 1.7), degC
    t_c_hat: float = 10.0           # fallback forecast inlet, degC
    solver: str = "highs"

    def __post_init__(self):
        if min(self.t_min, self.t_bact, self.t_s_max, self.t_s_min_apply,
               self.phi, self.phi_mass) <= 0:
            raise InputError("all thresholds must be positive")
        if not (self.t_min < self.t_bact < self.t_s_max):
            raise InputError("need t_min < t_bact < t_s_max")
        if not (0.0 < self.a < 1.0):
            raise InputError("tracking parameter a must lie in (0, 1)")
        if self.horizon < 1 or self.bact_window < 1 or self.bact_lookback < 0:
            raise InputError("horizon and pi windows must be positive")


def compute_pi(forecast_values, config: MpcConfig, recent_flows=None,
               step_minutes: float = 5.0) -> np.ndarray:
    """Binary bacteria-penalty schedule over the horizon.

    pi[j-1] (for lookahead j = 1..J) is 0 when any forecasted flow in
    the spike window j-4..j exceeds phi, or when the rolling
    ``bact_window``-step integrated mass through j exceeds Phi; else 1.
    Lookaheads at or before the origin use recorded flows
    (``recent_flows``, most recent last); missing history counts as no
    draw.
    """
    fvals = np.asarray(forecast_values, float)
    J = fvals.size
    hist_len = max(config.bact_window, config.bact_lookback)
    hist = np.zeros(hist_len)
    if recent_flows is not None:
        rf = np.asarray(recent_flows, float)
        take = min(hist_len, rf.size)
        if take:
            hist[hist_len - take:] = rf[rf.size - take:]
    concat = np.concatenate([hist, fvals])  # lookahead i at index i + hist_len - 1

    def idx(i):
        return i + hist_len - 1

    exceeds = concat > config.phi
    spike = np.empty(J, dtype=bool)
    csum = np.concatenate([[0.0], np.cumsum(concat)])
    mass = np.empty(J)
    span = config.bact_lookback + 1
    for j in range(1, J + 1):
        lo = idx(j - config.bact_lookback)
        spike[j - 1] = exceeds[lo: idx(j) + 1].any()
        m_lo = idx(j - config.bact_window)
        mass[j - 1] = step_minutes * (csum[idx(j) + 1] - csum[m_lo])
    pi = np.ones(J, dtype=int)
    pi[spike | (mass > config.phi_mass)] = 0
    return pi


@dataclass(frozen=True)
class MpcProblem:
    """One receding-horizon instance: initial state, per-step discrete
    systems built from the forecast, prices, and the pi schedule."""

    initial_state: TankState
    params: TankParams
    config: MpcConfig
    a_batch: np.ndarray     # (J, 2, 2)
    b_batch: np.ndarray     # (J, 2)
    w_batch: np.ndarray     # (J, 2)
    prices: np.ndarray      # (J,)
    pi: np.ndarray          # (J,) in {0, 1}
    gamma: float            # $/degC/h
    step_hours: float
    forecast: DrawForecast

    @property
    def horizon(self) -> int:
        return len(self.prices)

    @property
    def systems(self) -> list:
        return [
            DiscreteSystem(self.a_batch[j], self.b_batch[j], self.w_batch[j], self.step_hours)
            for j in range(self.horizon)
        ]


def build_problem(state: TankState, params: TankParams, config: MpcConfig,
                  forecast: DrawForecast, prices, t_a_hat: float | None = None,
                  t_c_hat: float | None = None, current_flow: float = 0.0,
                  recent_flows=None, step_hours: float = 5.0 / 60.0) -> MpcProblem:
    """Assemble one LP instance.

    The per-step dynamics use the measured current flow for the first
    interval and the forecast for the rest; ambient and inlet
    temperatures are held at their forecast values over the horizon.
    """
    J = config.horizon
    if len(forecast) != J:
        raise InputError(f"forecast length {len(forecast)} != horizon {J}")
    prices = np.asarray(prices, float)
    if prices.shape != (J,):
        raise InputError(f"need {J} prices, got shape {prices.shape}")
    t_a_hat = config.t_a_hat if t_a_hat is None else t_a_hat
    t_c_hat = config.t_c_hat if t_c_hat is None else t_c_hat
    flows_kg_min = np.concatenate([[current_flow], forecast.values[: J - 1]])
    a_b, b_b, w_b = discretize_batch(
        params, flows_kg_min * KG_MIN_TO_KG_H, t_a_hat, t_c_hat, step_hours
    )
    pi = compute_pi(forecast.values, config, recent_flows, step_hours * 60.0)
    max_price = float(prices.max()) if prices.size else 0.0
    gamma = config.gamma_multiplier * (max_price if max_price > 0 else GAMMA_PRICE_FLOOR)
    return MpcProblem(state, params, config, a_b, b_b, w_b, prices, pi,
                      gamma, step_hours, forecast)


@dataclass(frozen=True)
class ProblemSizeAudit:
    """Structural counts of one LP instance before the epigraph
    reformulation of the positive-part penalties.

    Variables are the planned trajectories: 2(J+1) node temperatures
    plus J heat rates plus J set-points — 1,154 at J=288. A reference
    audit of this formulation lists 1,174 decision variables; the extra
    20 have no counterpart in the variable list above. The same audit's
    constraint totals do reconcile: 578 equalities (2 initial + 2J
    thermal dynamics) and 864 inequalities (J set-point ceilings + 2J
    two-sided capacity bounds).
    """

    horizon: int
    n_variables: int
    n_equality: int
    n_inequality: int
    reference_variable_count: int = 1174

    @property
    def variable_count_discrepancy(self) -> int:
        return self.reference_variable_count - self.n_variables


def problem_size_audit(horizon: int = 288) -> ProblemSizeAudit:
    """Pre-reformulation size audit; see ProblemSizeAudit for the
    counting convention."""
    J = horizon
    return ProblemSizeAudit(
        horizon=J,
        n_variables=2 * (J + 1) + 2 * J,
        n_equality=2 + 2 * J,
        n_inequality=3 * J,
    )


@dataclass(frozen=True)
class MpcSolution:
    """Planned trajectories, objective, and the implemented set-point."""

    t_u_plan: np.ndarray       # (J+1,)
    t_l_plan: np.ndarray       # (J+1,)
    q_plan: np.ndarray         # (J,)
    t_s_plan: np.ndarray       # (J,)
    objective_value: float     # $
    energy_cost: float         # $
    comfort_penalty: float     # $
    bacteria_penalty: float    # $
    applied_setpoint: float    # degC, quantized and clamped
    applied_setpoint_f: int    # degF integer actually sent
    solver_status: str
    solve_seconds: float


def _variable_layout(J: int):
    i_tu = 0
    i_tl = J + 1
    i_q = 2 * (J + 1)
    i_ts = i_q + J
    i_sc = i_ts + J
    i_sb = i_sc + J
    n = i_sb + J
    return i_tu, i_tl, i_q, i_ts, i_sc, i_sb, n


def _assemble_lp(problem: MpcProblem) -> LpProblem:
    J = problem.horizon
    cfg = problem.config
    p = problem.params
    dt = problem.step_hours
    i_tu, i_tl, i_q, i_ts, i_sc, i_sb, n = _variable_layout(J)
    a_b, b_b, w_b = problem.a_batch, problem.b_batch, problem.w_batch

    c = np.zeros(n)
    c[i_q: i_q + J] = dt / p.eta * problem.prices
    c[i_sc: i_sc + J] = problem.gamma * dt
    c[i_sb: i_sb + J] = problem.gamma * dt * problem.pi

    j = np.arange(J)
    up = 2 + 2 * j       # dynamics rows, upper node
    lo = 3 + 2 * j       # dynamics rows, lower node
    tr = 2 + 2 * J + j   # tracking rows
    m_eq = 2 + 3 * J

    rows = np.concatenate([
        [0, 1],
        up, up, up, up,
        lo, lo, lo, lo,
        tr, tr, tr,
    ])
    cols = np.concatenate([
        [i_tu, i_tl],
        i_tu + j + 1, i_tu + j, i_tl + j, i_q + j,
        i_tl + j + 1, i_tu + j, i_tl + j, i_q + j,
        i_tu + j + 1, i_tu + j, i_ts + j,
    ])
    ones = np.ones(J)
    data = np.concatenate([
        [1.0, 1.0],
        ones, -a_b[:, 0, 0], -a_b[:, 0, 1], -b_b[:, 0],
        ones, -a_b[:, 1, 0], -a_b[:, 1, 1], -b_b[:, 1],
        ones, np.full(J, -cfg.a), np.full(J, -(1.0 - cfg.a)),
    ])
    a_eq = sp.coo_matrix((data, (rows, cols)), shape=(m_eq, n)).tocsc()
    b_eq = np.concatenate([
        [problem.initial_state.t_u, problem.initial_state.t_l],
        np.ravel(np.column_stack([w_b[:, 0], w_b[:, 1]])),
        np.zeros(J),
    ])

    # comfort rows: -T_u(j) - s_c(j) <= -T_min; bacteria rows:
    # -(T_u(j)+T_l(j))/2 - s_b(j) <= -T_bact, both for j = 1..J.
    rc = np.arange(J)
    rb = J + rc
    rows_ub = np.concatenate([rc, rc, rb, rb, rb])
    cols_ub = np.concatenate([
        i_tu + 1 + rc, i_sc + rc,
        i_tu + 1 + rc, i_tl + 1 + rc, i_sb + rc,
    ])
    data_ub = np.concatenate([
        -np.ones(J), -np.ones(J),
        np.full(J, -0.5), np.full(J, -0.5), -np.ones(J),
    ])
    a_ub = sp.coo_matrix((data_ub, (rows_ub, cols_ub)), shape=(2 * J, n)).tocsc()
    b_ub = np.concatenate([np.full(J, -cfg.t_min), np.full(J, -cfg.t_bact)])

    bounds = (
        [(None, None)] * (2 * (J + 1))
        + [(0.0, p.q_max)] * J
        + [(None, cfg.t_s_max)] * J
        + [(0.0, None)] * (2 * J)
    )
    return LpProblem(c, a_eq, b_eq, a_ub, b_ub, bounds)


def quantize_setpoint(t_s: float, config: MpcConfig) -> tuple[float, int]:
    """Round to the nearest integer degF and clamp to the accepted
    range; returns (degC, degF)."""
    f = math.floor(c_to_f(t_s) + 0.5)
    f_lo = round(c_to_f(config.t_s_min_apply))
    f_hi = round(c_to_f(config.t_s_max))
    f = min(max(f, f_lo), f_hi)
    return f_to_c(f), int(f)


def plan_objective(problem: MpcProblem, t_u, t_l, q) -> tuple[float, float, float]:
    """Energy, comfort, and bacteria terms evaluated at a plan."""
    dt = problem.step_hours
    cfg = problem.config
    energy = dt / problem.params.eta * float(problem.prices @ q)
    comfort = problem.gamma * dt * float(np.maximum(cfg.t_min - t_u[1:], 0.0).sum())
    mean_t = 0.5 * (t_u[1:] + t_l[1:])
    bact = problem.gamma * dt * float(
        (problem.pi * np.maximum(cfg.t_bact - mean_t, 0.0)).sum()
    )
    return energy, comfort, bact


def _check_plan(problem: MpcProblem, t_u, t_l, q, t_s, tol=1e-6):
    cfg = problem.config
    res = 0.0
    res = max(res, abs(t_u[0] - problem.initial_state.t_u))
    res = max(res, abs(t_l[0] - problem.initial_state.t_l))
    x = np.column_stack([t_u[:-1], t_l[:-1]])
    nxt = (
        np.einsum("jab,jb->ja", problem.a_batch, x)
        + problem.b_batch * q[:, None]
        + problem.w_batch
    )
    res = max(res, float(np.abs(nxt[:, 0] - t_u[1:]).max()))
    res = max(res, float(np.abs(nxt[:, 1] - t_l[1:]).max()))
    res = max(res, float(np.abs(cfg.a * t_u[:-1] + (1 - cfg.a) * t_s - t_u[1:]).max()))
    res = max(res, float(max(0.0, (t_s - cfg.t_s_max).max())))
    res = max(res, float(max(0.0, (-q).max(), (q - problem.params.q_max).max())))
    if res > tol:
        raise SolverFailure(f"returned plan violates constraints by {res:.3e}")


def solve(problem: MpcProblem, backend: str | None = None) -> MpcSolution:
    """Solve one receding-horizon LP and post-process the set-point.

    Raises Infeasible if the solver reports infeasibility (a defect —
    the penalties are soft) and SolverFailure on any other non-optimal
    outcome, with the solver message attached.
    """
    J = problem.horizon
    lp = _assemble_lp(problem)
    t0 = _time.perf_counter()
    result = solve_lp(lp, backend or problem.config.solver)
    elapsed = _time.perf_counter() - t0
    if result.status == "infeasible":
        raise Infeasible(f"LP infeasible at J={J}: {result.message}")
    if result.status != "optimal":
        raise SolverFailure(
            f"LP {result.status} at J={J}: {result.message}; "
            f"iterate: fun={result.fun!r}, x_head={result.x[:6]!r}"
        )
    i_tu, i_tl, i_q, i_ts, _, _, _ = _variable_layout(J)
    x = result.x
    t_u = x[i_tu: i_tu + J + 1]
    t_l = x[i_tl: i_tl + J + 1]
    q = x[i_q: i_q + J]
    t_s = x[i_ts: i_ts + J]
    _check_plan(problem, t_u, t_l, q, t_s)
    energy, comfort, bact = plan_objective(problem, t_u, t_l, q)
    applied_c, applied_f = quantize_setpoint(float(t_s[0]), problem.config)
    return MpcSolution(
        t_u_plan=t_u.copy(), t_l_plan=t_l.copy(), q_plan=q.copy(),
        t_s_plan=t_s.copy(),
        objective_value=energy + comfort + bact,
        energy_cost=energy, comfort_penalty=comfort, bacteria_penalty=bact,
        applied_setpoint=applied_c, applied_setpoint_f=applied_f,
        solver_status=result.status, solve_seconds=elapsed,
    )


@dataclass
class ControlDecision:
    """Outcome of one control step; on a fault the previous set-point
    is held and ``fault`` carries the reason."""

    k: int
    setpoint: float
    setpoint_f: int
    solution: MpcSolution | None = None
    fault: str | None = None


class MpcController:
    """Stateful receding-horizon controller for one water heater.

    Owns the fitted forecast members, the previous set-point (held on
    any fault), the running inlet-temperature estimate, and a per-step
    log. Steps are strictly sequential; distinct heaters get distinct
    controllers.
    """

    def __init__(self, params: TankParams, config: MpcConfig | None = None,
                 ensemble_cfg: EnsembleConfig | None = None,
                 tau: float = DEFAULT_TAU, seed: int = 0,
                 initial_setpoint: float = DEFAULT_INITIAL_SETPOINT):
        self.params = params
        self.config = config or MpcConfig()
        self.ensemble_cfg = ensemble_cfg or EnsembleConfig()
        if self.ensemble_cfg.j != self.config.horizon:
            raise InputError("ensemble horizon J must match the MPC horizon")
        self.tau = tau
        self.seed = seed
        self.members: dict = {}
        self.t_c_est: float | None = None
        sp_c, sp_f = quantize_setpoint(initial_setpoint, self.config)
        self.prev_setpoint = sp_c
        self.prev_setpoint_f = sp_f
        self.log: list[ControlDecision] = []
        self._retrain_count = 0

    @property
    def is_fitted(self) -> bool:
        return bool(self.members)

    def retrain(self, history: dict[str, TimeSeries]) -> None:
        """Fit the ensemble members on the supplied history (typically
        the trailing training window, called nightly)."""
        cfg = self.ensemble_cfg
        short_js = list(cfg.short_horizons)
        table = build_training_table(history, short_js, self.tau)
        seed = self.seed + 7919 * self._retrain_count
        self.members = {
            "short": fit(cfg.short_model, table, seed),
            "medium": fit(cfg.medium_model, table, seed),
            "long": fit(cfg.long_model, table, seed),
        }
        self._retrain_count += 1

    def _update_inlet_estimate(self, history: dict[str, TimeSeries], k: int) -> None:
        if "T_c" not in history:
            return
        if history["mdot"].values[k] > self.config.phi:
            t_c = float(history["T_c"].values[k])
            self.t_c_est = t_c if self.t_c_est is None else min(self.t_c_est, t_c)

    def step(self, clock: SimClock, history: dict[str, TimeSeries],
             tariff: Tariff) -> ControlDecision:
        """One control step at ``clock.k``.

        ``history`` series must run through index ``clock.k`` (the
        current measurement is the last sample). Any toolkit error
        degrades to holding the previous set-point and logging the
        fault.
        """
        k = clock.k
        try:
            flow = history["mdot"]
            if len(flow) != k + 1:
                raise InputError(
                    f"history length {len(flow)} does not end at step {k}"
                )
            self._update_inlet_estimate(history, k)
            feats = build_feature_matrix(history, np.array([k]), self.tau)[0]
            ctx = ForecastContext(feats, k, flow)
            forecast = ensemble_forecast(self.ensemble_cfg, self.members, ctx)
            prices = price_window(tariff, clock, self.config.horizon)
            state = TankState(float(history["T_u"].values[k]),
                              float(history["T_l"].values[k]))
            recent = flow.values[max(0, k + 1 - self.config.bact_window): k + 1]
            problem = build_problem(
                state, self.params, self.config, forecast, prices,
                t_c_hat=self.t_c_est, current_flow=float(flow.values[k]),
                recent_flows=recent,
            )
            solution = solve(problem)
            decision = ControlDecision(k, solution.applied_setpoint,
                                       solution.applied_setpoint_f, solution)
            self.prev_setpoint = solution.applied_setpoint
            self.prev_setpoint_f = solution.applied_setpoint_f
        except TankMpcError as exc:
            decision = ControlDecision(k, self.prev_setpoint, self.prev_setpoint_f,
                                       None, fault=f"{type(exc).__name__}: {exc}")
        self.log.append(decision)
        return decision
