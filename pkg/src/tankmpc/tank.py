"""Two-node control-oriented tank model.

The tank is abstracted as stacked upper/lower well-mixed water columns
separated by a thin thermocline. Continuous dynamics are assembled as a
2x2 linear system in the node temperatures; with piecewise-constant
inputs over a step the discrete-time system is exact, so discretization
uses a true matrix exponential (closed-form 2x2 eigendecomposition with
a series fallback near repeated eigenvalues), never an Euler scheme.

Units: capacitance kWh/degC, resistances degC/kW, flows kg/h inside the
model (time series carry kg/min; convert with KG_MIN_TO_KG_H), specific
heat kWh/(kg*degC), power kW, step lengths in hours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateParams, InputError, SingularAtilde

#: Specific heat of water, kWh/(kg*degC).
CP_WATER = 4.186 / 3600.0

#: Thermal conductivity of water, W/(m*degC).
K_WATER = 0.63

#: kg/min -> kg/h.
KG_MIN_TO_KG_H = 60.0


def stratification_resistance(h_s: float, cross_section: float, k_w: float = K_WATER) -> float:
    """Inter-node resistance in degC/kW from the stratification layer
    thickness h_s (m), tank cross-section (m^2), and water conductivity
    (W/(m*degC)). The factor 1000 converts degC/W to degC/kW."""
    if h_s <= 0 or cross_section <= 0 or k_w <= 0:
        raise DegenerateParams("h_s, cross_section, k_w must all be positive")
    return 1000.0 * h_s / (k_w * cross_section)


@dataclass(frozen=True)
class TankParams:
    """Physical parameters of the two-node model.

    Defaults are the tuned profile for the reference 189.3 L unit:
    datasheet capacitance and insulation, field-tuned eta, z, h_s, and
    lambda. ``R_ul`` is derived from ``h_s`` unless given explicitly, in
    which case it must be consistent with the stratification-layer
    formula.
    """

    C: float = 0.197            # kWh/degC
    R_a: float = 1476.0         # degC/kW
    z: float = 0.5              # upper-node height fraction
    lam: float = 0.3            # heat-pump output fraction to upper node
    eta: float = 3.5            # constant COP
    P_max: float = 0.425        # kW electrical
    cp: float = CP_WATER        # kWh/(kg*degC)
    tank_height: float = 1.0    # m
    cross_section: float = 0.1893  # m^2
    k_w: float = K_WATER        # W/(m*degC)
    h_s: float = 0.025          # m
    R_ul: float = None          # degC/kW; derived from h_s when omitted

    def __post_init__(self):
        if not (0.0 < self.z < 1.0):
            raise DegenerateParams(f"z must lie strictly in (0, 1), got {self.z}")
        if not (0.0 <= self.lam <= 1.0):
            raise DegenerateParams(f"lambda must lie in [0, 1], got {self.lam}")
        if min(self.eta, self.C, self.R_a, self.P_max, self.cp) <= 0:
            raise DegenerateParams("eta, C, R_a, P_max, cp must all be positive")
        if not (0.0 < (1.0 - self.z) * self.tank_height < self.tank_height):
            raise DegenerateParams("thermocline height must lie inside the tank")
        derived = stratification_resistance(self.h_s, self.cross_section, self.k_w)
        if self.R_ul is None:
            object.__setattr__(self, "R_ul", derived)
        elif not math.isclose(self.R_ul, derived, rel_tol=1e-6):
            raise DegenerateParams(
                f"R_ul={self.R_ul} inconsistent with h_s/(k_w*A)={derived:.6g}"
            )

    @property
    def q_max(self) -> float:
        """Maximum heat-pump thermal output, kW."""
        return self.eta * self.P_max

    def replace(self, **kwargs) -> "TankParams":
        """Copy with selected fields changed; R_ul re-derives from h_s
        unless explicitly supplied."""
        fields = {
            "C": self.C, "R_a": self.R_a, "z": self.z, "lam": self.lam,
            "eta": self.eta, "P_max": self.P_max, "cp": self.cp,
            "tank_height": self.tank_height, "cross_section": self.cross_section,
            "k_w": self.k_w, "h_s": self.h_s, "R_ul": None,
        }
        fields.update(kwargs)
        return TankParams(**fields)


@dataclass(frozen=True)
class TankState:
    """Upper and lower node temperatures, degC.

    Buoyancy inversion (t_u < t_l) is representable; the linear model
    applies no corrective mixing.
    """

    t_u: float
    t_l: float

    def __post_init__(self):
        if not (math.isfinite(self.t_u) and math.isfinite(self.t_l)):
            raise InputError("node temperatures must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.t_u, self.t_l])


@dataclass(frozen=True)
class BoundaryConditions:
    """Exogenous inputs over one step: draw flow (kg/h), ambient and
    inlet temperatures (degC), and heat-pump thermal output (kW)."""

    mdot: float
    t_a: float
    t_c: float
    q: float = 0.0

    def __post_init__(self):
        if self.mdot < 0:
            raise InputError("draw mass flow must be nonnegative")


@dataclass(frozen=True)
class DiscreteSystem:
    """Exact one-step map T(k+1) = A T(k) + B q(k) + w(k)."""

    A: np.ndarray
    B: np.ndarray
    w: np.ndarray
    step_hours: float

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, float).reshape(2, 2))
        object.__setattr__(self, "B", np.asarray(self.B, float).reshape(2))
        object.__setattr__(self, "w", np.asarray(self.w, float).reshape(2))


def continuous_matrices(p: TankParams, mdot: float, t_a: float, t_c: float):
    """Continuous-time system matrices for given draw flow and boundary
    temperatures.

    Args:
        p: tank parameters.
        mdot: draw mass flow, kg/h.
        t_a: ambient temperature, degC.
        t_c: inlet water temperature, degC.

    Returns:
        (Atilde, Btilde, wtilde): 2x2 array and two 2-vectors.
    """
    if mdot < 0:
        raise InputError("mdot must be nonnegative")
    if p.z <= 0.0 or p.z >= 1.0:
        raise DegenerateParams("z in {0, 1} divides by zero")
    flow = mdot * p.cp  # kW/degC
    cu = p.z * p.C
    cl = (1.0 - p.z) * p.C
    a11 = -(1.0 / p.R_ul + p.z / p.R_a + flow) / cu
    a12 = (1.0 / p.R_ul + flow) / cu
    a21 = 1.0 / (cl * p.R_ul)
    a22 = -(flow + 1.0 / p.R_ul + (1.0 - p.z) / p.R_a) / cl
    atilde = np.array([[a11, a12], [a21, a22]])
    if a11 * a22 - a12 * a21 == 0.0:
        raise SingularAtilde("continuous system matrix is singular")
    btilde = np.array([p.lam / p.z, (1.0 - p.lam) / (1.0 - p.z)]) / p.C
    wtilde = np.array([t_a / p.R_a, t_a / p.R_a + flow * t_c / (1.0 - p.z)]) / p.C
    return atilde, btilde, wtilde


def _phi_batch(lam: np.ndarray, dt: float) -> np.ndarray:
    """(exp(lam*dt) - 1) / lam, elementwise, with the lam -> 0 limit."""
    lam = np.asarray(lam, complex)
    small = np.abs(lam) * dt < 1e-12
    safe = np.where(small, 1.0, lam)
    out = (np.exp(lam * dt) - 1.0) / safe
    # Two-term series keeps the limit smooth through lam == 0.
    return np.where(small, dt * (1.0 + lam * dt / 2.0), out)


def _psi_series(m: np.ndarray, dt: float) -> np.ndarray:
    """Integral of exp(m*s) over [0, dt] by a scaled-and-squared series.

    Used as the fallback when the eigenvalues of ``m`` (nearly)
    coincide; also serves as an independent oracle for tests.
    """
    if dt == 0.0:
        return np.zeros((2, 2))
    norm = np.max(np.abs(m)) * dt
    n_squarings = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    t = dt / (2 ** n_squarings)
    # psi(t) = t * sum_n (m t)^n / (n+1)!
    mt = m * t
    term = np.eye(2)
    acc = np.eye(2)
    for n in range(1, 24):
        term = term @ mt / (n + 1)
        acc = acc + term
        if np.max(np.abs(term)) < 1e-18:
            break
    psi = t * acc
    for _ in range(n_squarings):
        a = np.eye(2) + m @ psi
        psi = psi @ (a + np.eye(2))
    return psi


def _psi_single(atilde: np.ndarray, dt: float) -> np.ndarray:
    """Integral of the matrix exponential over one step for a single
    2x2 matrix, via closed-form eigendecomposition with series
    fallback when the eigenvalues nearly coincide."""
    tr = atilde[0, 0] + atilde[1, 1]
    det = atilde[0, 0] * atilde[1, 1] - atilde[0, 1] * atilde[1, 0]
    disc = complex(tr * tr - 4.0 * det)
    root = np.sqrt(disc)
    lam1 = (tr + root) / 2.0
    lam2 = (tr - root) / 2.0
    if abs(lam1 - lam2) < 1e-10:
        return _psi_series(atilde, dt)
    phi1 = _phi_batch(np.array([lam1]), dt)[0]
    phi2 = _phi_batch(np.array([lam2]), dt)[0]
    alpha = (phi1 - phi2) / (lam1 - lam2)
    beta = (lam1 * phi2 - lam2 * phi1) / (lam1 - lam2)
    psi = alpha * atilde + beta * np.eye(2)
    return psi.real


def discretize(atilde, btilde, wtilde, dt_hours: float) -> DiscreteSystem:
    """Exact zero-order-hold discretization over a step of ``dt_hours``.

    A = exp(Atilde*dt); B and w are the integrated responses
    Atilde^-1 (A - I) Btilde and Atilde^-1 (A - I) wtilde, computed
    through the integral form so no explicit inverse is needed.
    """
    atilde = np.asarray(atilde, float).reshape(2, 2)
    btilde = np.asarray(btilde, float).reshape(2)
    wtilde = np.asarray(wtilde, float).reshape(2)
    if dt_hours < 0:
        raise InputError("dt_hours must be nonnegative")
    det = atilde[0, 0] * atilde[1, 1] - atilde[0, 1] * atilde[1, 0]
    if det == 0.0:
        raise SingularAtilde("Atilde is singular; zero-order hold undefined per model contract")
    psi = _psi_single(atilde, dt_hours)
    a = np.eye(2) + atilde @ psi
    return DiscreteSystem(a, psi @ btilde, psi @ wtilde, dt_hours)


def discretize_batch(p: TankParams, mdot_kg_h, t_a, t_c, dt_hours: float):
    """Vectorized discretization over a horizon of draw forecasts.

    Args:
        p: tank parameters.
        mdot_kg_h: array of J draw flows, kg/h.
        t_a, t_c: scalar (or length-J) ambient and inlet temperatures.
        dt_hours: step length.

    Returns:
        (A, B, w): arrays of shape (J, 2, 2), (J, 2), (J, 2).
    """
    mdot = np.asarray(mdot_kg_h, float)
    if np.any(mdot < 0):
        raise InputError("mdot must be nonnegative")
    J = len(mdot)
    t_a = np.broadcast_to(np.asarray(t_a, float), (J,))
    t_c = np.broadcast_to(np.asarray(t_c, float), (J,))
    flow = mdot * p.cp
    cu = p.z * p.C
    cl = (1.0 - p.z) * p.C
    a11 = -(1.0 / p.R_ul + p.z / p.R_a + flow) / cu
    a12 = (1.0 / p.R_ul + flow) / cu
    a21 = np.full(J, 1.0 / (cl * p.R_ul))
    a22 = -(flow + 1.0 / p.R_ul + (1.0 - p.z) / p.R_a) / cl

    tr = a11 + a22
    det = a11 * a22 - a12 * a21
    root = np.sqrt((tr * tr - 4.0 * det).astype(complex))
    lam1 = (tr + root) / 2.0
    lam2 = (tr - root) / 2.0

    m = np.empty((J, 2, 2))
    m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1] = a11, a12, a21, a22

    sep = np.abs(lam1 - lam2)
    psi = np.empty((J, 2, 2))
    ok = sep >= 1e-10
    if np.any(ok):
        phi1 = _phi_batch(lam1[ok], dt_hours)
        phi2 = _phi_batch(lam2[ok], dt_hours)
        dlam = lam1[ok] - lam2[ok]
        alpha = ((phi1 - phi2) / dlam).real
        beta = ((lam1[ok] * phi2 - lam2[ok] * phi1) / dlam).real
        psi[ok] = alpha[:, None, None] * m[ok] + beta[:, None, None] * np.eye(2)
    for j in np.flatnonzero(~ok):
        psi[j] = _psi_series(m[j], dt_hours)

    a = np.eye(2)[None, :, :] + np.einsum("jab,jbc->jac", m, psi)
    btilde = np.array([p.lam / p.z, (1.0 - p.lam) / (1.0 - p.z)]) / p.C
    b = psi @ btilde
    wtilde = np.empty((J, 2))
    wtilde[:, 0] = t_a / p.R_a / p.C
    wtilde[:, 1] = (t_a / p.R_a + flow * t_c / (1.0 - p.z)) / p.C
    w = np.einsum("jab,jb->ja", psi, wtilde)
    return a, b, w


def step_state(sys: DiscreteSystem, s: TankState, q: float) -> TankState:
    """Advance one step: T(k+1) = A T(k) + B q + w."""
    nxt = sys.A @ s.as_array() + sys.B * q + sys.w
    return TankState(float(nxt[0]), float(nxt[1]))


def make_system(p: TankParams, bc: BoundaryConditions, dt_hours: float) -> DiscreteSystem:
    """Convenience: continuous matrices + discretization in one call."""
    return discretize(*continuous_matrices(p, bc.mdot, bc.t_a, bc.t_c), dt_hours)
