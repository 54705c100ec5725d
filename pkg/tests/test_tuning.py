"""Grid-search parameter identification."""

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from tankmpc.errors import EmptyGrid, InsufficientData
from tankmpc.tank import TankParams
from tankmpc.timeseries import TimeSeries
from tankmpc.tuning import (
    TuningGrid,
    candidate_objective,
    simulate_measurements,
    tune_parameters,
)

TZ = timezone(timedelta(hours=-5))
T0 = datetime(2024, 6, 1, 0, 0, tzinfo=TZ)


def synthetic_flow(days: int, seed: int = 0) -> TimeSeries:
    """Morning/evening draw pattern at 5-min resolution, kg/min."""
    rng = np.random.default_rng(seed)
    n = days * 288
    vals = np.zeros(n)
    for d in range(days):
        for start_h, vol_l in ((7.0, 45.0), (8.5, 40.0), (19.5, 30.0)):
            k0 = d * 288 + int(start_h * 12) + rng.integers(-3, 4)
            rate = 8.0  # kg/min
            steps = int(np.ceil(vol_l / (rate * 5.0)))
            for i in range(steps):
                vals[min(n - 1, k0 + i)] = min(rate, vol_l / 5.0 - i * rate)
        for _ in range(8):
            k = d * 288 + rng.integers(0, 288)
            vals[k] = max(vals[k], rng.uniform(0.2, 0.9))
    return TimeSeries(T0, vals, "kg/min")


GEN = TankParams().replace(eta=3.0, z=0.5, lam=0.3, h_s=0.025, R_ul=None)


@pytest.fixture(scope="module")
def bundle():
    return simulate_measurements(GEN, synthetic_flow(14), t_a=20.0, t_c=10.0)


class TestGrid:
    def test_default_axes_match_search_spec(self):
        g = TuningGrid()
        assert g.eta[0] == 1.0 and g.eta[-1] == 5.0 and len(g.eta) == 41
        assert g.h_s[0] == 0.005 and len(g.h_s) == 10
        assert g.lam == tuple(round(0.1 * i, 1) for i in range(11))
        # z endpoints are degenerate and dropped
        assert 0.0 not in g.z and 1.0 not in g.z and len(g.z) == 9

    def test_empty_grid_raises(self):
        with pytest.raises(EmptyGrid):
            TuningGrid(z=(0.0, 1.0))
        with pytest.raises(EmptyGrid):
            TuningGrid(eta=())

    def test_candidate_order_lexicographic(self):
        g = TuningGrid(eta=(2.0, 3.0), h_s=(0.025,), lam=(0.3,), z=(0.4, 0.5))
        assert list(g.candidates()) == [
            (2.0, 0.025, 0.3, 0.4),
            (2.0, 0.025, 0.3, 0.5),
            (3.0, 0.025, 0.3, 0.4),
            (3.0, 0.025, 0.3, 0.5),
        ]


class TestTuner:
    def test_single_candidate_returned(self, bundle):
        grid = TuningGrid(eta=(2.5,), h_s=(0.045,), lam=(0.6,), z=(0.4,))
        got = tune_parameters(bundle, grid)
        assert (got.eta, got.h_s, got.lam, got.z) == (2.5, 0.045, 0.6, 0.4)

    def test_recovers_generating_point(self, bundle):
        # Self-consistency oracle: plant == model, so the generating grid
        # point scores exactly zero and must win.
        grid = TuningGrid(
            eta=(2.0, 3.0, 4.0),
            h_s=(0.015, 0.025, 0.045),
            lam=(0.1, 0.3, 0.7),
            z=(0.3, 0.5, 0.7),
        )
        got = tune_parameters(bundle, grid)
        assert (got.eta, got.h_s, got.lam, got.z) == (3.0, 0.025, 0.3, 0.5)
        assert candidate_objective(GEN, bundle, 48.9, 2.8) < 1e-12

    def test_objective_scale_invariant_in_power(self, bundle):
        # Scaling all power measurements leaves the argmin unchanged.
        grid = TuningGrid(eta=(2.0, 3.0), h_s=(0.025,), lam=(0.3,), z=(0.5,))
        scaled = dict(bundle)
        scaled["P"] = bundle["P"].with_values(bundle["P"].values * 3.0)
        a = tune_parameters(bundle, grid)
        b = tune_parameters(scaled, grid)
        assert (a.eta, a.h_s, a.lam, a.z) == (b.eta, b.h_s, b.lam, b.z)

    def test_insufficient_data(self):
        short = simulate_measurements(GEN, synthetic_flow(3), t_a=20.0, t_c=10.0)
        with pytest.raises(InsufficientData):
            tune_parameters(short, TuningGrid(eta=(3.0,), h_s=(0.025,), lam=(0.3,), z=(0.5,)))

    def test_paper_profile_is_default(self):
        p = TankParams()
        assert (p.eta, p.z, p.h_s, p.lam) == (3.5, 0.5, 0.025, 0.3)
