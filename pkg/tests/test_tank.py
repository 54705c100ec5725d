"""Two-node tank model: matrices, exact discretization, stepping."""

import math

import numpy as np
import pytest

from tankmpc.errors import DegenerateParams, SingularAtilde
from tankmpc.tank import (
    CP_WATER,
    BoundaryConditions,
    TankParams,
    TankState,
    _psi_series,
    continuous_matrices,
    discretize,
    discretize_batch,
    make_system,
    step_state,
    stratification_resistance,
)

DT = 5.0 / 60.0


def rk4_rollout(p, state, mdot, t_a, t_c, q, dt_hours, n_sub):
    """Independent fine integration of the raw energy balances."""

    def deriv(x):
        t_u, t_l = x
        f = mdot * p.cp
        du = ((t_l - t_u) / p.R_ul + p.z * (t_a - t_u) / p.R_a
              + p.lam * q + f * (t_l - t_u)) / (p.z * p.C)
        dl = ((t_u - t_l) / p.R_ul + (1 - p.z) * (t_a - t_l) / p.R_a
              + (1 - p.lam) * q + f * (t_c - t_l)) / ((1 - p.z) * p.C)
        return np.array([du, dl])

    h = dt_hours / n_sub
    x = np.array([state.t_u, state.t_l], float)
    for _ in range(n_sub):
        k1 = deriv(x)
        k2 = deriv(x + h / 2 * k1)
        k3 = deriv(x + h / 2 * k2)
        k4 = deriv(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


class TestParams:
    def test_default_profile(self):
        p = TankParams()
        assert p.eta == 3.5
        assert p.z == 0.5
        assert p.h_s == 0.025
        assert p.lam == 0.3
        assert p.C == 0.197
        assert p.R_a == 1476.0

    def test_r_ul_from_stratification_layer(self):
        p = TankParams()
        expected = 1000 * p.h_s / (p.k_w * p.cross_section)
        assert p.R_ul == pytest.approx(expected, rel=1e-12)
        assert p.R_ul == pytest.approx(209.62778490512246, rel=1e-12)

    def test_inconsistent_r_ul_rejected(self):
        with pytest.raises(DegenerateParams):
            TankParams(R_ul=100.0)

    def test_degenerate_z(self):
        for z in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DegenerateParams):
                TankParams(z=z)

    def test_q_max(self):
        assert TankParams().q_max == pytest.approx(3.5 * 0.425)

    def test_stratification_resistance_guard(self):
        with pytest.raises(DegenerateParams):
            stratification_resistance(0.0, 0.19)


class TestContinuousMatrices:
    def test_no_flow_offdiagonals(self):
        p = TankParams()
        at, _, _ = continuous_matrices(p, 0.0, 20.0, 10.0)
        assert at[0, 1] == pytest.approx(1.0 / (p.z * p.C * p.R_ul), rel=1e-12)
        assert at[1, 0] == pytest.approx(1.0 / ((1 - p.z) * p.C * p.R_ul), rel=1e-12)

    def test_golden_entries_default_profile(self):
        # Frozen from a high-precision evaluation of the raw energy
        # balances with the default parameter profile.
        p = TankParams()
        at0, bt, _ = continuous_matrices(p, 0.0, 18.3, 10.0)
        assert at0[0, 0] == pytest.approx(-0.05186917144704442, rel=1e-14)
        assert at0[0, 1] == pytest.approx(0.04843005076142132, rel=1e-14)
        assert at0[1, 0] == pytest.approx(0.04843005076142132, rel=1e-14)
        assert at0[1, 1] == pytest.approx(-0.05186917144704442, rel=1e-14)
        assert bt[0] == pytest.approx(3.0456852791878173, rel=1e-14)
        assert bt[1] == pytest.approx(7.1065989847715736, rel=1e-14)

        at, _, wt = continuous_matrices(p, 480.0, 18.3, 10.0)  # 8 kg/min draw
        assert at[0, 0] == pytest.approx(-5.7181974286382458, rel=1e-14)
        assert at[0, 1] == pytest.approx(5.7147583079526227, rel=1e-14)
        assert at[1, 0] == pytest.approx(0.04843005076142132, rel=1e-14)
        assert at[1, 1] == pytest.approx(-5.7181974286382458, rel=1e-14)
        assert wt[0] == pytest.approx(0.062935908546902728, rel=1e-14)
        assert wt[1] == pytest.approx(56.726218480458916, rel=1e-14)

    def test_equilibrium_is_fixed_point_of_dynamics(self):
        p = TankParams()
        t = 18.3
        at, _, wt = continuous_matrices(p, 0.0, t, t)
        assert np.allclose(at @ np.array([t, t]) + wt, 0.0, atol=1e-12)

    def test_invertible_over_random_valid_params(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = TankParams(
                C=rng.uniform(0.05, 0.5),
                R_a=rng.uniform(200, 4000),
                z=rng.uniform(0.05, 0.95),
                lam=rng.uniform(0, 1),
                eta=rng.uniform(1, 5),
                h_s=rng.uniform(0.005, 0.1),
            )
            at, _, _ = continuous_matrices(p, rng.uniform(0, 800), 20.0, 10.0)
            assert abs(np.linalg.det(at)) > 0


class TestDiscretize:
    def test_dt_zero_identity(self):
        p = TankParams()
        sysd = make_system(p, BoundaryConditions(0.0, 20.0, 10.0), 0.0)
        assert np.allclose(sysd.A, np.eye(2))
        assert np.allclose(sysd.B, 0.0)
        assert np.allclose(sysd.w, 0.0)

    def test_matches_euler_substeps_default_profile(self):
        p = TankParams()
        at, bt, wt = continuous_matrices(p, 0.0, 18.3, 10.0)
        sysd = discretize(at, bt, wt, DT)
        a_euler = np.eye(2)
        h = 1.0 / 3600.0
        for _ in range(300):
            a_euler = (np.eye(2) + at * h) @ a_euler
        assert np.abs(sysd.A - a_euler).max() < 1e-6

    def test_singular_raises(self):
        with pytest.raises(SingularAtilde):
            discretize(np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros(2), np.zeros(2), DT)

    def test_series_fallback_matches_scaling_and_squaring(self):
        # Equal eigenvalues: Jordan-block style matrix hits the fallback.
        m = np.array([[-2.0, 1.0], [0.0, -2.0]])
        b = np.array([1.0, 2.0])
        w = np.array([0.5, -0.5])
        sysd = discretize(m, b, w, DT)
        # Oracle: scaling-and-squaring expm from scipy plus explicit inverse.
        import scipy.linalg as sla

        a_ref = sla.expm(m * DT)
        psi_ref = np.linalg.inv(m) @ (a_ref - np.eye(2))
        assert np.abs(sysd.A - a_ref).max() < 1e-9
        assert np.abs(sysd.B - psi_ref @ b).max() < 1e-9
        assert np.abs(sysd.w - psi_ref @ w).max() < 1e-9

    def test_psi_series_vs_eigen_path(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = TankParams(
                C=rng.uniform(0.05, 0.5), z=rng.uniform(0.1, 0.9),
                h_s=rng.uniform(0.005, 0.1),
            )
            at, _, _ = continuous_matrices(p, rng.uniform(0, 600), 20.0, 10.0)
            from tankmpc.tank import _psi_single

            assert np.abs(_psi_single(at, DT) - _psi_series(at, DT)).max() < 1e-12

    def test_batch_matches_scalar(self):
        p = TankParams()
        flows = np.array([0.0, 60.0, 480.0, 120.0, 0.0])
        a, b, w = discretize_batch(p, flows, 18.3, 10.0, DT)
        for j, f in enumerate(flows):
            ref = make_system(p, BoundaryConditions(float(f), 18.3, 10.0), DT)
            assert np.abs(a[j] - ref.A).max() < 1e-13
            assert np.abs(b[j] - ref.B).max() < 1e-13
            assert np.abs(w[j] - ref.w).max() < 1e-13


class TestStepState:
    def test_equilibrium_fixed_point(self):
        p = TankParams()
        t = 18.3
        sysd = make_system(p, BoundaryConditions(0.0, t, t), DT)
        nxt = step_state(sysd, TankState(t, t), 0.0)
        assert nxt.t_u == pytest.approx(t, abs=1e-9)
        assert nxt.t_l == pytest.approx(t, abs=1e-9)

    def test_full_heat_raises_both_nodes(self):
        p = TankParams()
        sysd = make_system(p, BoundaryConditions(0.0, 18.3, 10.0), DT)
        s0 = TankState(45.0, 45.0)
        s1 = step_state(sysd, s0, p.q_max)
        # Sign cross-check against fine integration.
        ref = rk4_rollout(p, s0, 0.0, 18.3, 10.0, p.q_max, DT, 300)
        assert s1.t_u > s0.t_u and s1.t_l > s0.t_l
        assert abs(s1.t_u - ref[0]) < 1e-6 and abs(s1.t_l - ref[1]) < 1e-6

    def test_cooling_when_ambient_below(self):
        # mdot = 0, q = 0, ambient below both nodes, uniform start: both
        # temperatures non-increasing. (From a stratified start the cooler
        # node can transiently warm via inter-node conduction, so the
        # per-node statement only holds from uniform states; total energy
        # dissipation is checked separately below.)
        p = TankParams()
        sysd = make_system(p, BoundaryConditions(0.0, 10.0, 10.0), DT)
        s = TankState(50.0, 50.0)
        for _ in range(50):
            nxt = step_state(sysd, s, 0.0)
            assert nxt.t_u <= s.t_u + 1e-12
            assert nxt.t_l <= s.t_l + 1e-12
            s = nxt

    def test_energy_dissipates_when_ambient_below(self):
        # Stratified start: total thermal energy and the hotter node are
        # both non-increasing while ambient is below both nodes.
        p = TankParams()
        sysd = make_system(p, BoundaryConditions(0.0, 10.0, 10.0), DT)
        s = TankState(50.0, 47.0)
        for _ in range(100):
            nxt = step_state(sysd, s, 0.0)
            e_prev = p.z * p.C * s.t_u + (1 - p.z) * p.C * s.t_l
            e_next = p.z * p.C * nxt.t_u + (1 - p.z) * p.C * nxt.t_l
            assert e_next <= e_prev + 1e-12
            assert max(nxt.t_u, nxt.t_l) <= max(s.t_u, s.t_l) + 1e-12
            s = nxt

    def test_draw_monotonicity_lower_node(self):
        # Larger draws with cold inlet never raise the next lower temp.
        p = TankParams()
        s = TankState(50.0, 45.0)
        prev = None
        for mdot in (0.0, 60.0, 240.0, 480.0):
            sysd = make_system(p, BoundaryConditions(mdot, 18.3, 10.0), DT)
            t_l = step_state(sysd, s, 0.0).t_l
            if prev is not None:
                assert t_l <= prev + 1e-12
            prev = t_l

    def test_exactness_random_sweep(self):
        # Property: one exact discrete step equals fine integration of the
        # continuous balances for random valid params, states, inputs.
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(300):
            p = TankParams(
                C=rng.uniform(0.08, 0.4),
                R_a=rng.uniform(300, 3000),
                z=rng.uniform(0.1, 0.9),
                lam=rng.uniform(0, 1),
                eta=rng.uniform(1, 5),
                h_s=rng.uniform(0.005, 0.1),
                P_max=rng.uniform(0.3, 1.0),
            )
            mdot = rng.uniform(0, 720)
            t_a, t_c = rng.uniform(5, 30), rng.uniform(4, 20)
            q = rng.uniform(0, p.q_max)
            s0 = TankState(rng.uniform(20, 65), rng.uniform(10, 65))
            sysd = make_system(p, BoundaryConditions(mdot, t_a, t_c), DT)
            got = step_state(sysd, s0, q)
            ref = rk4_rollout(p, s0, mdot, t_a, t_c, q, DT, 300)
            worst = max(worst, abs(got.t_u - ref[0]), abs(got.t_l - ref[1]))
        assert worst < 1e-6
