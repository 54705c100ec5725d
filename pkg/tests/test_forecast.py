"""Forecasting: features, model families, metrics, ensemble."""

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from tankmpc.errors import (
    AlignmentError,
    EmptyTrainingSet,
    InsufficientHistory,
    UnfittedModel,
    UnknownModelId,
)
from tankmpc.forecast import (
    DrawForecast,
    EnsembleConfig,
    ForecastContext,
    build_feature_matrix,
    build_features,
    build_training_table,
    ensemble_forecast,
    evaluate,
    fit,
    load_model,
    save_model,
)
from tankmpc.timeseries import TimeSeries

TZ = timezone(timedelta(hours=-5))
MIDNIGHT = datetime(2024, 3, 4, 0, 0, tzinfo=TZ)  # a Monday


def flow_series(values, start=MIDNIGHT):
    return TimeSeries(start, np.asarray(values, float), "kg/min")


def history(values, start=MIDNIGHT):
    return {"mdot": flow_series(values, start)}


def ctx_for(hist, k, tau=0.75):
    feats = build_features(hist, k, tau).as_array()
    return ForecastContext(feats, k, hist["mdot"])


class TestFeatures:
    def test_hour_zero_encoding(self):
        row = build_features(history(np.zeros(20)), 12)  # 01:00 local
        # start at midnight; index 0 is hour 0
        row0 = build_features(history(np.zeros(20)), 12, tau=0.75)
        assert row0.sin_h == pytest.approx(np.sin(2 * np.pi * 1.0 / 24))
        hist = history(np.zeros(300))
        at_midnight = build_features(hist, 288)  # next midnight
        assert at_midnight.sin_h == pytest.approx(0.0, abs=1e-12)
        assert at_midnight.cos_h == pytest.approx(1.0)

    def test_hour_six_encoding(self):
        hist = history(np.zeros(300))
        row = build_features(hist, 72)  # 06:00
        assert row.sin_h == pytest.approx(1.0)
        assert abs(row.cos_h) < 1e-12

    def test_weekday_encoding_on_unit_circle(self):
        hist = history(np.zeros(289 * 8))
        for k in (12, 300, 2000):
            row = build_features(hist, k)
            assert row.sin_w**2 + row.cos_w**2 == pytest.approx(1.0, abs=1e-12)

    def test_draw_recency_hand_count(self):
        past = [0.0] * 9 + [0.9, 0.0, 0.8]  # oldest .. newest, 12 samples
        vals = past + [0.0]  # origin at index 12
        row = build_features(history(vals), 12, tau=0.75)
        assert row.recent_draw_count == 2
        assert row.steps_since_draw == 1

    def test_since_cap_when_no_draws(self):
        row = build_features(history(np.zeros(400)), 350)
        assert row.steps_since_draw == 288
        assert row.recent_draw_count == 0

    def test_insufficient_history(self):
        with pytest.raises(InsufficientHistory):
            build_features(history(np.zeros(20)), 5)

    def test_matrix_matches_single(self):
        rng = np.random.default_rng(5)
        vals = np.where(rng.uniform(size=600) < 0.05, rng.uniform(0.8, 8, 600), 0.0)
        hist = history(vals)
        ks = np.array([12, 100, 300, 599])
        mat = build_feature_matrix(hist, ks)
        for i, k in enumerate(ks):
            assert np.array_equal(mat[i], build_features(hist, int(k)).as_array())


def periodic_day_pattern(days, amplitude_at=84, flow=6.0):
    """One draw block at the same time every day -> 24 h periodic."""
    vals = np.zeros(days * 288)
    for d in range(days):
        vals[d * 288 + amplitude_at: d * 288 + amplitude_at + 3] = flow
    return vals


class TestModels:
    def test_unknown_model_id(self):
        table = build_training_table(history(periodic_day_pattern(3)), [1])
        with pytest.raises(UnknownModelId):
            fit("arima", table)

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            build_training_table(history(np.zeros(100)), [288])

    def test_persistence_exact_on_periodic(self):
        vals = periodic_day_pattern(5)
        hist = history(vals)
        table = build_training_table(hist, [1])
        model = fit("persistence", table)
        k = 3 * 288 + 10
        ctx = ctx_for(hist, k)
        js = np.arange(1, 289)
        got = model.predict_horizons(ctx, js)
        assert np.array_equal(got, vals[k + js - 288])
        assert np.array_equal(got, vals[k - 288 + js - 288 + 288])  # periodicity

    def test_persistence_needs_full_day(self):
        hist = history(np.zeros(300))
        model = fit("persistence", build_training_table(hist, [1]))
        with pytest.raises(InsufficientHistory):
            model.predict(ForecastContext(np.zeros(9), 100, hist["mdot"]), 1)

    def test_seasonal_fourier_recovers_sinusoid(self):
        n = 30 * 288
        k = np.arange(n)
        hour = (k * 5.0 / 60.0) % 24
        vals = 2.0 + np.sin(2 * np.pi * hour / 24.0)
        hist = history(vals)
        table = build_training_table(hist, [1])
        model = fit("seasonal_fourier", table)
        # amplitude of the n=1 daily pair
        a, b = model.coef[2], model.coef[3]
        assert np.hypot(a, b) == pytest.approx(1.0, abs=1e-6)
        assert model.coef[0] == pytest.approx(2.0, abs=1e-6)
        ctx = ctx_for(hist, n - 300)
        pred = model.predict(ctx, 12)  # one hour ahead
        t_target = ((n - 300 + 12) * 5.0 / 60.0) % 24
        assert pred == pytest.approx(2.0 + np.sin(2 * np.pi * t_target / 24), abs=1e-6)

    def test_random_forest_constant_target(self):
        vals = np.full(600, 0.5)
        hist = history(vals)
        table = build_training_table(hist, [1, 2, 3])
        model = fit("random_forest", table, seed=1)
        ctx = ctx_for(hist, 400)
        for j in (1, 2, 3):
            assert model.predict(ctx, j) == pytest.approx(0.5, abs=1e-12)

    def test_gradient_boosting_learns_mean_structure(self):
        vals = periodic_day_pattern(8)
        hist = history(vals)
        table = build_training_table(hist, [1])
        model = fit("gradient_boosting", table, seed=3)
        # mid-draw context: next step should be predicted clearly above zero
        k = 6 * 288 + 85
        assert model.predict(ctx_for(hist, k), 1) > 1.0

    def test_linear_regression_exact_on_linear_target(self):
        rng = np.random.default_rng(9)
        vals = np.where(rng.uniform(size=900) < 0.1, rng.uniform(0.8, 4, 900), 0.0)
        hist = history(vals)
        table = build_training_table(hist, [1, 5])
        model = fit("linear", table)
        # OLS residuals must be orthogonal to the design; spot-check that
        # predictions reproduce the fitted values at training rows.
        i = 50
        ctx = ForecastContext(table.x[i], int(table.origins[i]), hist["mdot"])
        xb = np.append(table.x[i], 1.0)
        assert model.predict(ctx, 1) == pytest.approx(max(0.0, xb @ model.coefs[1]))

    def test_tree_models_deterministic_given_seed(self):
        vals = periodic_day_pattern(6)
        hist = history(vals)
        table = build_training_table(hist, [1, 2])
        ctx = ctx_for(hist, 5 * 288 + 84)
        a = fit("random_forest", table, seed=42).predict_horizons(ctx, [1, 2])
        b = fit("random_forest", table, seed=42).predict_horizons(ctx, [1, 2])
        assert np.array_equal(a, b)

    def test_nonnegative_predictions(self):
        rng = np.random.default_rng(17)
        vals = np.where(rng.uniform(size=900) < 0.08, rng.uniform(0.8, 8, 900), 0.0)
        hist = history(vals)
        table = build_training_table(hist, [1, 4])
        ctx = ctx_for(hist, 700)
        for mid in ("linear", "random_forest", "gradient_boosting", "seasonal_fourier"):
            model = fit(mid, table, seed=0)
            assert model.predict(ctx, 1) >= 0.0
            assert model.predict(ctx, 4) >= 0.0

    def test_snapshot_roundtrip(self, tmp_path):
        vals = periodic_day_pattern(4)
        hist = history(vals)
        table = build_training_table(hist, [1])
        model = fit("random_forest", table, seed=7)
        path = tmp_path / "model.bin"
        save_model(path, model)
        back = load_model(path)
        ctx = ctx_for(hist, 3 * 288 + 84)
        assert back.predict(ctx, 1) == model.predict(ctx, 1)


class TestEvaluate:
    def test_perfect_forecast_zero_metrics(self):
        vals = periodic_day_pattern(3)
        actual = flow_series(vals)
        k = 288 + 50
        f = DrawForecast(k, vals[k + 1: k + 289])
        m = evaluate(actual, [f])
        assert m.mae == 0 and m.rmse == 0 and m.wmae == 0
        assert np.all(m.wmae_by_horizon == 0)

    def test_hand_example(self):
        actual = flow_series([0.0, 0.0, 2.0])
        f = DrawForecast(0, [1.0, 1.0])
        m = evaluate(actual, [f])
        assert m.mae == pytest.approx(1.0)
        assert m.rmse == pytest.approx(1.0)
        assert m.wmae == pytest.approx(1.0)  # (0*1 + 2*1) / 2

    def test_alignment_error(self):
        actual = flow_series(np.zeros(100))
        with pytest.raises(AlignmentError):
            evaluate(actual, [DrawForecast(50, np.zeros(288))])

    def test_persistence_zero_wmae_on_periodic(self):
        vals = periodic_day_pattern(6)
        hist = history(vals)
        model = fit("persistence", build_training_table(hist, [1]))
        forecasts = []
        for k in range(2 * 288, 4 * 288, 48):
            ctx = ctx_for(hist, k)
            forecasts.append(DrawForecast(k, model.predict_horizons(ctx, np.arange(1, 289))))
        m = evaluate(flow_series(vals), forecasts)
        assert m.wmae == 0.0
        assert np.all(m.wmae_by_horizon == 0.0)


class _Const:
    """Stub member returning a fixed value at every horizon."""

    def __init__(self, value):
        self.value = value

    def predict_horizons(self, ctx, js):
        return np.full(len(js), self.value, dtype=float)


class TestEnsemble:
    def test_piecewise_stub_assembly(self):
        cfg = EnsembleConfig(j1=2, j2=3, j=4)
        hist = history(np.zeros(600))
        ctx = ctx_for(hist, 500)
        models = {"short": _Const(1.0), "medium": _Const(2.0), "long": _Const(3.0)}
        f = ensemble_forecast(cfg, models, ctx)
        assert list(f.values) == [1.0, 2.0, 3.0, 3.0]
        assert f.origin_k == 500

    def test_default_blocks(self):
        cfg = EnsembleConfig()
        assert list(cfg.short_horizons) == [1, 2, 3, 4]
        assert cfg.medium_horizons[0] == 5 and cfg.medium_horizons[-1] == 100
        assert cfg.long_horizons[0] == 101 and cfg.long_horizons[-1] == 288

    def test_unfitted_member(self):
        cfg = EnsembleConfig(j1=2, j2=3, j=4)
        hist = history(np.zeros(600))
        with pytest.raises(UnfittedModel):
            ensemble_forecast(cfg, {"short": _Const(1), "medium": None, "long": _Const(2)},
                              ctx_for(hist, 500))

    def test_bit_equality_with_members(self):
        vals = periodic_day_pattern(8)
        hist = history(vals)
        table = build_training_table(hist, [1, 2, 3, 4])
        members = {
            "short": fit("random_forest", table, seed=11),
            "medium": fit("seasonal_fourier", table),
            "long": fit("persistence", table),
        }
        cfg = EnsembleConfig()
        ctx = ctx_for(hist, 6 * 288 + 84)
        f = ensemble_forecast(cfg, members, ctx)
        assert len(f) == 288
        for j in (1, 4):
            assert f.values[j - 1] == members["short"].predict(ctx, j)
        for j in (5, 50, 100):
            assert f.values[j - 1] == members["medium"].predict(ctx, j)
        for j in (101, 288):
            assert f.values[j - 1] == members["long"].predict(ctx, j)

    def test_short_member_reacts_to_ongoing_draw(self):
        # During a large draw the reactive short model forecasts more
        # near-term flow than the smooth seasonal member.
        rng = np.random.default_rng(23)
        days = 20
        vals = np.zeros(days * 288)
        for d in range(days):
            start = d * 288 + 84 + rng.integers(-2, 3)
            vals[start: start + 4] = 8.0  # 20-min shower
        hist = history(vals)
        table = build_training_table(hist, [1, 2, 3, 4])
        short = fit("random_forest", table, seed=2)
        medium = fit("seasonal_fourier", table)
        k = (days - 2) * 288 + 85  # second step of an ongoing shower
        assert hist["mdot"].values[k] == 8.0
        ctx = ctx_for(hist, k)
        assert short.predict(ctx, 1) > medium.predict(ctx, 1)
