"""Linear-program interface with interchangeable backends.

The controller expresses each receding-horizon problem in the bounded
form

    minimize    c' x
    subject to  A_eq x == b_eq
                A_ub x <= b_ub
                lo <= x <= hi   (None = unbounded)

and hands it to :func:`solve_lp`. The default backend is scipy's HiGHS
(simplex/IPM); a self-contained dense two-phase simplex is bundled for
small problems and environments without scipy's solvers. Any exact LP
solver can be plugged in through the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import Infeasible, InputError, SolverFailure

BACKENDS = ("highs", "simplex")


@dataclass
class LpProblem:
    c: np.ndarray
    a_eq: object = None     # (m_eq, n) array or scipy sparse
    b_eq: np.ndarray = None
    a_ub: object = None
    b_ub: np.ndarray = None
    bounds: list = None     # per-variable (lo, hi); defaults to x >= 0

    def __post_init__(self):
        self.c = np.asarray(self.c, float)
        n = self.c.size
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise InputError("bounds length must match the variable count")


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    fun: float
    status: str          # optimal | infeasible | unbounded | failed
    message: str = ""


def solve_lp(problem: LpProblem, backend: str = "highs") -> LpResult:
    """Solve; raises nothing — inspect result.status.

    ``Infeasible``/``SolverFailure`` raising is left to callers that
    know whether infeasibility is a defect.
    """
    if backend == "highs":
        return _solve_highs(problem)
    if backend == "simplex":
        return _solve_bundled_simplex(problem)
    raise InputError(f"unknown LP backend {backend!r}; expected one of {BACKENDS}")


def _solve_highs(problem: LpProblem) -> LpResult:
    res = linprog(
        problem.c,
        A_ub=problem.a_ub, b_ub=problem.b_ub,
        A_eq=problem.a_eq, b_eq=problem.b_eq,
        bounds=problem.bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9,
                 "dual_feasibility_tolerance": 1e-9},
    )
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "failed")
    x = res.x if res.x is not None else np.full(problem.c.size, np.nan)
    fun = float(res.fun) if res.fun is not None else np.nan
    return LpResult(np.asarray(x, float), fun, status, res.message)


# ---------------------------------------------------------------------------
# Bundled dense two-phase simplex
# ---------------------------------------------------------------------------

_TOL = 1e-9


def _to_standard_form(problem: LpProblem):
    """Rewrite the bounded form as min c'y, A y = b, y >= 0.

    Free variables split into y+ - y-; finite lower bounds shift; finite
    upper bounds and <= rows gain slack variables. Returns (c, A, b,
    recover) where recover maps a standard-form solution back to x.
    """
    c = problem.c
    n = c.size
    a_eq = np.zeros((0, n)) if problem.a_eq is None else _dense(problem.a_eq, n)
    b_eq = np.zeros(0) if problem.b_eq is None else np.asarray(problem.b_eq, float)
    a_ub = np.zeros((0, n)) if problem.a_ub is None else _dense(problem.a_ub, n)
    b_ub = np.zeros(0) if problem.b_ub is None else np.asarray(problem.b_ub, float)

    cols = []          # per original variable: ("shift", col, lo) or ("free", col_pos, col_neg)
    upper_rows = []    # (col_in_std, cap) for finite upper bounds after shift
    n_std = 0
    for i, (lo, hi) in enumerate(problem.bounds):
        if lo is None:
            cols.append(("free", n_std, n_std + 1))
            n_std += 2
            if hi is not None:
                upper_rows.append((i, hi))
        else:
            cols.append(("shift", n_std, lo))
            n_std += 1
            if hi is not None:
                upper_rows.append((i, hi - lo))

    def expand(mat):
        out = np.zeros((mat.shape[0], n_std))
        for i, spec in enumerate(cols):
            if spec[0] == "free":
                out[:, spec[1]] = mat[:, i]
                out[:, spec[2]] = -mat[:, i]
            else:
                out[:, spec[1]] = mat[:, i]
        return out

    # Shift constants from finite lower bounds into the RHS.
    shift = np.array([spec[2] if spec[0] == "shift" else 0.0 for spec in cols])
    b_eq2 = b_eq - a_eq @ shift if a_eq.size else b_eq
    b_ub2 = b_ub - a_ub @ shift if a_ub.size else b_ub

    rows = [expand(a_eq)] if a_eq.size else []
    rhs = [b_eq2] if a_eq.size else []

    n_slack = len(b_ub2) + len(upper_rows)
    total = n_std + n_slack
    blocks = []
    if a_ub.size:
        ub_block = np.hstack([expand(a_ub), np.eye(len(b_ub2)), np.zeros((len(b_ub2), len(upper_rows)))])
        blocks.append((ub_block, b_ub2))
    for r, (i, cap) in enumerate(upper_rows):
        row = np.zeros(total)
        spec = cols[i]
        if spec[0] == "free":
            row[spec[1]] = 1.0
            row[spec[2]] = -1.0
        else:
            row[spec[1]] = 1.0
        row[n_std + len(b_ub2) + r] = 1.0
        blocks.append((row[None, :], np.array([cap])))

    a_rows = []
    if rows:
        a_rows.append(np.hstack([rows[0], np.zeros((rows[0].shape[0], n_slack))]))
    for blk, _ in blocks:
        a_rows.append(blk)
    a_std = np.vstack(a_rows) if a_rows else np.zeros((0, total))
    b_std = np.concatenate(rhs + [b for _, b in blocks]) if (rhs or blocks) else np.zeros(0)

    c_std = np.zeros(total)
    for i, spec in enumerate(cols):
        if spec[0] == "free":
            c_std[spec[1]] = c[i]
            c_std[spec[2]] = -c[i]
        else:
            c_std[spec[1]] = c[i]
    offset = float(c @ shift)

    def recover(y):
        x = np.empty(n)
        for i, spec in enumerate(cols):
            if spec[0] == "free":
                x[i] = y[spec[1]] - y[spec[2]]
            else:
                x[i] = y[spec[1]] + spec[2]
        return x

    return c_std, a_std, b_std, offset, recover


def _dense(mat, n):
    if sp.issparse(mat):
        mat = mat.toarray()
    mat = np.asarray(mat, float)
    if mat.ndim != 2 or mat.shape[1] != n:
        raise InputError("constraint matrix shape mismatch")
    return mat


def _pivot(tableau, basis, row, col):
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and abs(tableau[r, col]) > 0:
            tableau[r] -= tableau[r, col] * tableau[row]
    basis[row] = col


def _simplex_iterate(tableau, basis, c, max_iter):
    """Bland's-rule simplex on an initialized feasible tableau."""
    m, n1 = tableau.shape
    n = n1 - 1
    for _ in range(max_iter):
        reduced = c[:n] - c[basis] @ tableau[:, :n]
        entering = -1
        for j in range(n):
            if reduced[j] < -_TOL:
                entering = j
                break
        if entering < 0:
            return "optimal"
        ratios = np.full(m, np.inf)
        col = tableau[:, entering]
        pos = col > _TOL
        ratios[pos] = tableau[pos, -1] / col[pos]
        if not np.any(np.isfinite(ratios)):
            return "unbounded"
        best = np.min(ratios)
        # Bland: among minimal ratios, pick the row whose basic variable
        # has the smallest index.
        rows = np.flatnonzero(ratios <= best + _TOL)
        row = min(rows, key=lambda r: basis[r])
        _pivot(tableau, basis, row, entering)
    return "failed"


def _solve_bundled_simplex(problem: LpProblem, max_iter: int = 20000) -> LpResult:
    c_std, a, b, offset, recover = _to_standard_form(problem)
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1.0
    b = np.abs(b)

    # Phase 1: artificial basis.
    tableau = np.hstack([a, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = _simplex_iterate(tableau, basis, c1, max_iter)
    if status != "optimal":
        return LpResult(np.full(problem.c.size, np.nan), np.nan, "failed",
                        "phase-1 did not converge")
    phase1_obj = float(c1[basis] @ tableau[:, -1])
    if phase1_obj > 1e-7:
        return LpResult(np.full(problem.c.size, np.nan), np.nan, "infeasible",
                        f"phase-1 optimum {phase1_obj:.3e} > 0")
    # Drive remaining artificials out of the basis where possible.
    for r in range(m):
        if basis[r] >= n:
            piv = np.flatnonzero(np.abs(tableau[r, :n]) > _TOL)
            if piv.size:
                _pivot(tableau, basis, r, int(piv[0]))

    keep = [r for r in range(m) if basis[r] < n or tableau[r, -1] > _TOL]
    redundant = [r for r in range(m) if r not in keep]
    if redundant:
        mask = np.ones(m, bool)
        mask[redundant] = False
        tableau = tableau[mask]
        basis = [basis[r] for r in range(m) if mask[r]]
        m = tableau.shape[0]
    if any(bi >= n for bi in basis):
        return LpResult(np.full(problem.c.size, np.nan), np.nan, "failed",
                        "artificial variable stuck in basis")

    # Phase 2 on the original costs (drop artificial columns).
    tableau = np.hstack([tableau[:, :n], tableau[:, -1:]])
    c2 = c_std
    status = _simplex_iterate(tableau, basis, c2, max_iter)
    if status == "unbounded":
        return LpResult(np.full(problem.c.size, np.nan), np.nan, "unbounded", "")
    if status != "optimal":
        return LpResult(np.full(problem.c.size, np.nan), np.nan, "failed",
                        "phase-2 did not converge")
    y = np.zeros(n)
    for r, bi in enumerate(basis):
        y[bi] = tableau[r, -1]
    x = recover(y)
    return LpResult(x, float(c_std @ y) + offset, "optimal", "")
