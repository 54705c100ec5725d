"""Independent oracles used by the test suite.

These deliberately avoid the library's solver path: the LP oracle
enumerates quantized heat-rate grids and rolls the dynamics forward
directly, so it can disagree with a broken solver.
"""

import numpy as np


def grid_objective(problem, q):
    """Objective and feasibility of one heat-rate trajectory, evaluated
    by direct rollout (no LP)."""
    cfg = problem.config
    dt = problem.step_hours
    t_u = problem.initial_state.t_u
    t_l = problem.initial_state.t_l
    obj = 0.0
    feasible = True
    for j in range(problem.horizon):
        obj += dt / problem.params.eta * problem.prices[j] * q[j]
        a = problem.a_batch[j]
        b = problem.b_batch[j]
        w = problem.w_batch[j]
        t_u1 = a[0, 0] * t_u + a[0, 1] * t_l + b[0] * q[j] + w[0]
        t_l1 = a[1, 0] * t_u + a[1, 1] * t_l + b[1] * q[j] + w[1]
        t_s = (t_u1 - cfg.a * t_u) / (1.0 - cfg.a)
        if t_s > cfg.t_s_max + 1e-9:
            feasible = False
        obj += problem.gamma * dt * max(0.0, cfg.t_min - t_u1)
        obj += problem.gamma * dt * problem.pi[j] * max(0.0, cfg.t_bact - 0.5 * (t_u1 + t_l1))
        t_u, t_l = t_u1, t_l1
    return obj, feasible


def exhaustive_grid_search(problem, grid_step=0.01):
    """Minimum objective over all heat-rate trajectories on a uniform
    grid of resolution ``grid_step`` kW. Returns (best_obj, best_q).

    The rollout broadcasts each step's grid along its own array axis,
    so the cartesian product is never materialized; intended for
    horizons J <= 3.
    """
    J = problem.horizon
    cfg = problem.config
    dt = problem.step_hours
    qmax = problem.params.q_max
    axis = np.arange(0.0, qmax + 1e-12, grid_step)
    if axis[-1] < qmax:
        axis = np.append(axis, qmax)  # keep the capacity bound enumerable
    t_u = np.array(problem.initial_state.t_u)
    t_l = np.array(problem.initial_state.t_l)
    obj = np.array(0.0)
    feas = np.array(True)
    for j in range(J):
        shape = [1] * J
        shape[j] = axis.size
        qj = axis.reshape(shape)
        obj = obj + dt / problem.params.eta * problem.prices[j] * qj
        a = problem.a_batch[j]
        b = problem.b_batch[j]
        w = problem.w_batch[j]
        t_u1 = a[0, 0] * t_u + a[0, 1] * t_l + b[0] * qj + w[0]
        t_l1 = a[1, 0] * t_u + a[1, 1] * t_l + b[1] * qj + w[1]
        t_s = (t_u1 - cfg.a * t_u) / (1.0 - cfg.a)
        feas = feas & (t_s <= cfg.t_s_max + 1e-9)
        obj = obj + problem.gamma * dt * np.maximum(0.0, cfg.t_min - t_u1)
        obj = obj + problem.gamma * dt * problem.pi[j] * np.maximum(
            0.0, cfg.t_bact - 0.5 * (t_u1 + t_l1)
        )
        t_u, t_l = t_u1, t_l1
    obj = np.where(np.broadcast_to(feas, obj.shape), obj, np.inf)
    best_flat = int(np.argmin(obj))
    best = np.unravel_index(best_flat, obj.shape)
    if not np.isfinite(obj[best]):
        return np.inf, None
    return float(obj[best]), axis[list(best)].copy()
