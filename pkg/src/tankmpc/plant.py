"""Ground-truth stratified water-heater plant.

A deliberately higher-order model than the two-node controller view:
N well-mixed layers (default 10, index 0 = top/outlet) with

* upward plug flow on draws (mixing-cell cascade: cold inflow at the
  bottom, outlet at the top),
* inter-node exchange (conduction plus a flow-proportional term for
  inlet-jet turbulence during draws),
* buoyancy resolution (adjacent inverted layers mix),
* heat-pump heat injected over the condenser-wrapped lower nodes with
  an affine COP in the condensing temperature,
* two resistance elements (hybrid mode only),
* ambient losses through the tank wall.

Controls: heat-pump hysteresis on the upper sensor for hpowh /
constant-60 / external-set-point modes; hybrid mode additionally drops
to the 4.5 kW lower element (heat pump off) when the upper sensor falls
below the trigger, and returns to the heat pump above trigger +
deadband. The thermostat acts every integration substep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .tank import CP_WATER, TankParams

MODES = ("hpowh", "hybrid", "constant60", "external_setpoint")

CONSTANT60_SETPOINT = 60.0
DEFAULT_SETPOINT = 48.9


@dataclass(frozen=True)
class PlantConfig:
    """Physical and control configuration of the simulated unit."""

    n_nodes: int = 10
    volume_l: float = 189.3
    element_upper_kw: float = 2.25
    element_lower_kw: float = 4.5
    hp_max_electrical_kw: float = 0.425
    cop_intercept: float = 5.38      # COP = intercept + slope * T_cond
    cop_slope: float = -0.06
    deadband: float = 2.8            # degC
    hybrid_element_trigger: float = 37.7
    mixing_kw_per_k: float = 1.0 / 209.62778490512246  # adjacent-node exchange
    draw_mixing_factor: float = 0.9   # extra exchange per unit of draw mdot*cp
    r_ambient: float = 1476.0        # degC/kW, whole tank
    hp_condenser_top_frac: float = 0.6   # heat spreads below this height
    upper_sensor_frac: float = 0.6       # height fraction of control sensor
    lower_sensor_frac: float = 0.2
    upper_element_frac: float = 0.7
    lower_element_frac: float = 0.12
    buoyancy_mixing: bool = True
    substep_factor: float = 0.2      # substep = factor * fastest time constant
    cp: float = CP_WATER

    def __post_init__(self):
        if self.n_nodes < 2:
            raise InputError("plant needs at least 2 nodes")
        if min(self.element_upper_kw, self.element_lower_kw,
               self.hp_max_electrical_kw, self.volume_l) <= 0:
            raise InputError("powers and volume must be positive")
        if self.cop(55.0) <= 1.0:
            raise InputError("COP curve must exceed 1 at 55 degC condensing")

    def cop(self, t_cond: float) -> float:
        return self.cop_intercept + self.cop_slope * t_cond

    @property
    def node_mass_kg(self) -> float:
        return self.volume_l / self.n_nodes  # 1 L of water ~ 1 kg

    @property
    def node_capacity_kwh_per_k(self) -> float:
        return self.node_mass_kg * self.cp

    def _node_at_height(self, frac: float) -> int:
        idx = int(math.floor((1.0 - frac) * self.n_nodes))
        return min(max(idx, 0), self.n_nodes - 1)

    @property
    def upper_sensor_node(self) -> int:
        return self._node_at_height(self.upper_sensor_frac)

    @property
    def lower_sensor_node(self) -> int:
        return self._node_at_height(self.lower_sensor_frac)

    @property
    def upper_element_node(self) -> int:
        return self._node_at_height(self.upper_element_frac)

    @property
    def lower_element_node(self) -> int:
        return self._node_at_height(self.lower_element_frac)

    def hp_profile(self) -> np.ndarray:
        """Per-node fractions of heat-pump output (condenser wrap on
        the lower part of the tank)."""
        first = self._node_at_height(self.hp_condenser_top_frac)
        weights = np.zeros(self.n_nodes)
        weights[first:] = 1.0
        return weights / weights.sum()

    @classmethod
    def matched_two_node(cls, params: TankParams, **overrides) -> "PlantConfig":
        """Plant configured to coincide with the two-node control model
        (cross-model consistency harness): two nodes, exchange 1/R_ul,
        heat split lambda/(1-lambda), constant COP, no extra mixing."""
        base = dict(
            n_nodes=2,
            volume_l=params.C / params.cp,   # kg of water behind C
            hp_max_electrical_kw=params.P_max,
            cop_intercept=params.eta,
            cop_slope=0.0,
            mixing_kw_per_k=1.0 / params.R_ul,
            draw_mixing_factor=0.0,
            r_ambient=params.R_a,
            buoyancy_mixing=False,
            upper_sensor_frac=0.75,
            lower_sensor_frac=0.25,
            substep_factor=0.02,
            cp=params.cp,
        )
        base.update(overrides)
        cfg = cls(**base)
        return cfg


@dataclass(frozen=True)
class PlantState:
    """Layer temperatures (index 0 = top) plus thermostat memory."""

    temps: np.ndarray
    hp_on: bool = False
    element_on: bool = False

    def __post_init__(self):
        t = np.asarray(self.temps, float)
        if not np.all(np.isfinite(t)):
            raise InputError("plant temperatures must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "temps", t)

    @classmethod
    def uniform(cls, config: PlantConfig, temp: float) -> "PlantState":
        return cls(np.full(config.n_nodes, float(temp)))


@dataclass(frozen=True)
class StepResult:
    """One control step of plant evolution with its energy ledger."""

    state: PlantState
    electrical_kw: float     # step-average electrical power
    hp_kw: float             # heat-pump share of electrical_kw
    element_kw: float        # element share
    outlet_t: float          # draw-weighted top-node temperature, degC
    heat_in_kwh: float       # thermal input from HP + elements
    loss_kwh: float          # ambient losses
    draw_kwh: float          # enthalpy removed by the draw
    delta_u_kwh: float       # tank internal-energy change


def _resolve_buoyancy(temps: np.ndarray) -> None:
    """Convective adjustment: merge any layer block that is warmer than
    the block above it until the profile is monotone non-increasing
    downward. Equal layer masses make block means energy-conserving."""
    if np.all(np.diff(temps) <= 1e-12):
        return
    blocks: list[list[float]] = []  # [sum, count], top to bottom
    for t in temps:
        blocks.append([float(t), 1])
        while (len(blocks) > 1
               and blocks[-1][0] * blocks[-2][1] > blocks[-2][0] * blocks[-1][1]):
            s, c = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += c
    i = 0
    for s, c in blocks:
        temps[i: i + c] = s / c
        i += c


def _hysteresis(on: bool, sensed: float, setpoint: float, deadband: float) -> bool:
    if on:
        return sensed < setpoint
    return sensed < setpoint - deadband


def simulate_step(state: PlantState, setpoint: float, mode: str, draw_kg: float,
                  t_a: float, t_c: float, config: PlantConfig,
                  dt_hours: float = 5.0 / 60.0) -> StepResult:
    """Advance the plant one control step.

    Args:
        state: current plant state.
        setpoint: commanded set-point, degC (fixed 60 in constant60
            mode; the unit default in hpowh/hybrid; the controller's
            output in external_setpoint mode).
        mode: one of MODES.
        draw_kg: water drawn during the step, kg (constant flow within
            the step).
        t_a: ambient air temperature, degC.
        t_c: inlet water temperature, degC.
        config: plant configuration.
        dt_hours: control step length.

    Returns:
        StepResult with the new state, average electrical power, the
        draw-weighted outlet temperature, and the step energy ledger.
    """
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}; expected one of {MODES}")
    if draw_kg < 0:
        raise InputError("draw must be nonnegative")
    if mode == "constant60":
        setpoint = CONSTANT60_SETPOINT

    n = config.n_nodes
    temps = state.temps.copy()
    cap = config.node_capacity_kwh_per_k           # kWh/degC per node
    g_amb = 1.0 / (config.r_ambient * n)           # kW/degC per node
    mdot_kg_h = draw_kg / dt_hours
    flow_g = mdot_kg_h * config.cp                 # kW/degC
    g_mix = config.mixing_kw_per_k + config.draw_mixing_factor * flow_g
    profile = config.hp_profile()
    hp_nodes = profile > 0
    i_us = config.upper_sensor_node
    i_elem_lo = config.lower_element_node

    # Substep small enough for the fastest node time constant.
    g_max = flow_g + 2.0 * g_mix + g_amb
    tau_h = cap / g_max
    n_sub = max(1, int(math.ceil(dt_hours / (config.substep_factor * tau_h))))
    h = dt_hours / n_sub

    hp_on = state.hp_on
    elem_on = state.element_on
    heat_in = loss = draw_out = 0.0
    hp_kwh = elem_kwh = 0.0
    outlet_acc = 0.0
    u_start = cap * float(temps.sum())

    for _ in range(n_sub):
        sensed = float(temps[i_us])
        if mode == "hybrid":
            if elem_on:
                elem_on = sensed < config.hybrid_element_trigger + config.deadband
            else:
                elem_on = sensed < config.hybrid_element_trigger
            hp_on = False if elem_on else _hysteresis(hp_on, sensed, setpoint, config.deadband)
        else:
            elem_on = False
            hp_on = _hysteresis(hp_on, sensed, setpoint, config.deadband)

        q_nodes = np.zeros(n)
        p_hp = p_elem = 0.0
        if hp_on:
            t_cond = float(temps[hp_nodes].mean())
            cop = max(config.cop(t_cond), 1.0)
            p_hp = config.hp_max_electrical_kw
            q_nodes += profile * (cop * p_hp)
        if elem_on:
            p_elem = config.element_lower_kw
            q_nodes[i_elem_lo] += config.element_lower_kw

        dq = q_nodes + g_amb * (t_a - temps)
        dq[:-1] += g_mix * (temps[1:] - temps[:-1])
        dq[1:] += g_mix * (temps[:-1] - temps[1:])
        if flow_g > 0:
            dq[:-1] += flow_g * (temps[1:] - temps[:-1])
            dq[-1] += flow_g * (t_c - temps[-1])

        heat_in += h * float(q_nodes.sum())
        loss += h * g_amb * float((temps - t_a).sum())
        draw_out += h * flow_g * (float(temps[0]) - t_c)
        hp_kwh += h * p_hp
        elem_kwh += h * p_elem
        outlet_acc += float(temps[0])

        temps += (h / cap) * dq
        if config.buoyancy_mixing:
            _resolve_buoyancy(temps)

    outlet_t = outlet_acc / n_sub
    delta_u = cap * float(temps.sum()) - u_start
    new_state = PlantState(temps, hp_on, elem_on)
    return StepResult(
        state=new_state,
        electrical_kw=(hp_kwh + elem_kwh) / dt_hours,
        hp_kw=hp_kwh / dt_hours,
        element_kw=elem_kwh / dt_hours,
        outlet_t=outlet_t,
        heat_in_kwh=heat_in,
        loss_kwh=loss,
        draw_kwh=draw_out,
        delta_u_kwh=delta_u,
    )
