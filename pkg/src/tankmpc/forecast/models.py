"""Forecast model families and the direct multi-horizon training table.

Five families are supported, identified by string id:

* ``persistence``      — value 24 h (288 steps) before the target time;
                         no fitting.
* ``linear``           — ordinary least squares per horizon.
* ``random_forest``    — bagged regression trees per horizon
                         (50 trees, depth 8, min leaf 5, sqrt-feature
                         subsampling).
* ``gradient_boosting``— sequential trees on residuals per horizon
                         (100 trees, depth 3, learning rate 0.1).
* ``seasonal_fourier`` — least squares on a linear trend plus daily
                         (n=1..6) and weekly (n=1..3) Fourier pairs,
                         evaluated at the target timestamp.

Tabular families use the direct strategy: the table maps the feature
row chi(k) to the future draw mdot(k+j), one regressor per lookahead j.
Negative predictions clip to zero. Tree fitting is seeded, so identical
data and seed give identical forecasts.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from ..errors import (
    EmptyTrainingSet,
    InputError,
    InsufficientHistory,
    UnknownModelId,
)
from ..timeseries import TimeSeries
from .features import DEFAULT_TAU, RECENT_WINDOW, build_feature_matrix

MODEL_IDS = (
    "persistence",
    "linear",
    "random_forest",
    "gradient_boosting",
    "seasonal_fourier",
)

#: Steps in the 24 h persistence lookback.
DAY_STEPS = 288

RF_TREES = 50
RF_MAX_DEPTH = 8
RF_MIN_LEAF = 5
GB_TREES = 100
GB_MAX_DEPTH = 3
GB_LEARNING_RATE = 0.1
FOURIER_DAILY = 6
FOURIER_WEEKLY = 3


@dataclass(frozen=True)
class DrawForecast:
    """Rolling multi-step draw forecast from origin step ``origin_k``;
    values[i] is the (i+1)-step-ahead flow in kg/min, all nonnegative."""

    origin_k: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise InputError("forecast needs at least one lookahead")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InputError("forecast values must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ForecastContext:
    """Everything a model may condition on at prediction time: the
    feature row chi(k), the origin index, and the flow history through
    k (tabular members use chi(k); the seasonal and persistence members
    use the target timestamp / past observations)."""

    features: np.ndarray
    k: int
    flow: TimeSeries


@dataclass(frozen=True)
class TrainingTable:
    """Direct multi-horizon table: x[i] = chi(origins[i]),
    y[i, h] = flow at origins[i] + horizons[h]."""

    x: np.ndarray
    y: np.ndarray
    horizons: tuple
    origins: np.ndarray
    flow: TimeSeries
    tau: float = DEFAULT_TAU

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]


def build_training_table(history: dict[str, TimeSeries], horizons,
                         tau: float = DEFAULT_TAU) -> TrainingTable:
    """Assemble the feature/target table over every usable origin.

    Origins run from the first index with a full past-hour window to
    the last index whose largest-horizon target is still observed.
    """
    horizons = tuple(sorted(set(int(j) for j in horizons)))
    if not horizons or horizons[0] < 1:
        raise InputError("horizons must be positive lookaheads")
    flow = history["mdot"]
    last_origin = len(flow) - 1 - horizons[-1]
    if last_origin < RECENT_WINDOW:
        raise EmptyTrainingSet(
            f"history of {len(flow)} samples leaves no usable origins "
            f"for horizon {horizons[-1]}"
        )
    origins = np.arange(RECENT_WINDOW, last_origin + 1)
    x = build_feature_matrix(history, origins, tau)
    y = np.stack([flow.values[origins + j] for j in horizons], axis=1)
    return TrainingTable(x, y, horizons, origins, flow, tau)


class PersistenceModel:
    """Yesterday-at-the-same-time forecast; no parameters."""

    model_id = "persistence"

    def predict_horizons(self, ctx: ForecastContext, js) -> np.ndarray:
        js = np.asarray(js, dtype=int)
        idx = ctx.k + js - DAY_STEPS
        if np.any(idx < 0) or np.any(idx > ctx.k):
            raise InsufficientHistory(
                "persistence needs 288 steps of history before the target"
            )
        return np.maximum(ctx.flow.values[idx], 0.0)

    def predict(self, ctx: ForecastContext, j: int) -> float:
        return float(self.predict_horizons(ctx, [j])[0])


class LinearModel:
    """Per-horizon ordinary least squares with intercept."""

    model_id = "linear"

    def __init__(self, coefs: dict[int, np.ndarray]):
        self.coefs = coefs

    @classmethod
    def fit(cls, table: TrainingTable) -> "LinearModel":
        xb = np.hstack([table.x, np.ones((table.n_rows, 1))])
        beta, *_ = np.linalg.lstsq(xb, table.y, rcond=None)
        return cls({j: beta[:, h] for h, j in enumerate(table.horizons)})

    def predict_horizons(self, ctx: ForecastContext, js) -> np.ndarray:
        xb = np.append(ctx.features, 1.0)
        out = np.empty(len(js))
        for i, j in enumerate(js):
            try:
                out[i] = xb @ self.coefs[int(j)]
            except KeyError:
                raise InsufficientHistory(f"linear model not fitted for horizon {j}")
        return np.maximum(out, 0.0)

    def predict(self, ctx: ForecastContext, j: int) -> float:
        return float(self.predict_horizons(ctx, [j])[0])


class RandomForestModel:
    """Bagged regression trees per horizon: bootstrap rows, sqrt-feature
    subsampling at each split, seeded for reproducibility."""

    model_id = "random_forest"

    def __init__(self, forests: dict[int, list]):
        self.forests = forests

    @classmethod
    def fit(cls, table: TrainingTable, seed: int = 0) -> "RandomForestModel":
        rng = np.random.default_rng(seed)
        n = table.n_rows
        forests: dict[int, list] = {}
        for h, j in enumerate(table.horizons):
            trees = []
            for _ in range(RF_TREES):
                rows = rng.integers(0, n, size=n)
                tree = DecisionTreeRegressor(
                    max_depth=RF_MAX_DEPTH,
                    min_samples_leaf=RF_MIN_LEAF,
                    max_features="sqrt",
                    random_state=int(rng.integers(0, 2**31 - 1)),
                )
                tree.fit(table.x[rows], table.y[rows, h])
                trees.append(tree)
            forests[j] = trees
        return cls(forests)

    def predict_horizons(self, ctx: ForecastContext, js) -> np.ndarray:
        x = np.ascontiguousarray(ctx.features.reshape(1, -1), dtype=np.float32)
        out = np.empty(len(js))
        for i, j in enumerate(js):
            try:
                trees = self.forests[int(j)]
            except KeyError:
                raise InsufficientHistory(f"forest not fitted for horizon {j}")
            out[i] = np.mean([t.predict(x, check_input=False)[0] for t in trees])
        return np.maximum(out, 0.0)

    def predict(self, ctx: ForecastContext, j: int) -> float:
        return float(self.predict_horizons(ctx, [j])[0])


class GradientBoostingModel:
    """Per-horizon boosted trees: each tree fits the residual of the
    running prediction, shrunk by the learning rate."""

    model_id = "gradient_boosting"

    def __init__(self, stages: dict[int, tuple]):
        self.stages = stages  # j -> (base, [trees])

    @classmethod
    def fit(cls, table: TrainingTable, seed: int = 0) -> "GradientBoostingModel":
        rng = np.random.default_rng(seed)
        stages: dict[int, tuple] = {}
        for h, j in enumerate(table.horizons):
            y = table.y[:, h]
            base = float(np.mean(y))
            pred = np.full_like(y, base)
            trees = []
            for _ in range(GB_TREES):
                tree = DecisionTreeRegressor(
                    max_depth=GB_MAX_DEPTH,
                    random_state=int(rng.integers(0, 2**31 - 1)),
                )
                tree.fit(table.x, y - pred)
                pred = pred + GB_LEARNING_RATE * tree.predict(table.x)
                trees.append(tree)
            stages[j] = (base, trees)
        return cls(stages)

    def predict_horizons(self, ctx: ForecastContext, js) -> np.ndarray:
        x = np.ascontiguousarray(ctx.features.reshape(1, -1), dtype=np.float32)
        out = np.empty(len(js))
        for i, j in enumerate(js):
            try:
                base, trees = self.stages[int(j)]
            except KeyError:
                raise InsufficientHistory(f"booster not fitted for horizon {j}")
            acc = base
            for t in trees:
                acc += GB_LEARNING_RATE * t.predict(x, check_input=False)[0]
            out[i] = acc
        return np.maximum(out, 0.0)

    def predict(self, ctx: ForecastContext, j: int) -> float:
        return float(self.predict_horizons(ctx, [j])[0])


class SeasonalFourierModel:
    """Linear trend plus daily/weekly Fourier seasonality, fit by least
    squares on the training flow and evaluated at the target timestamp.
    The lookahead enters only through the timestamp, so one fit serves
    every horizon."""

    model_id = "seasonal_fourier"

    def __init__(self, coef: np.ndarray, epoch, step_seconds: float):
        self.coef = coef
        self.epoch = epoch
        self.step_seconds = step_seconds

    @staticmethod
    def _basis(t_days: np.ndarray) -> np.ndarray:
        cols = [np.ones_like(t_days), t_days]
        for n in range(1, FOURIER_DAILY + 1):
            cols.append(np.sin(2 * np.pi * n * t_days))
            cols.append(np.cos(2 * np.pi * n * t_days))
        for n in range(1, FOURIER_WEEKLY + 1):
            cols.append(np.sin(2 * np.pi * n * t_days / 7.0))
            cols.append(np.cos(2 * np.pi * n * t_days / 7.0))
        return np.stack(cols, axis=1)

    @classmethod
    def fit(cls, table: TrainingTable) -> "SeasonalFourierModel":
        flow = table.flow
        step_s = flow.step.total_seconds()
        t_days = np.arange(len(flow)) * step_s / 86400.0
        basis = cls._basis(t_days)
        coef, *_ = np.linalg.lstsq(basis, flow.values, rcond=None)
        return cls(coef, flow.start, step_s)

    def _t_days(self, ctx: ForecastContext, js: np.ndarray) -> np.ndarray:
        offset_s = (ctx.flow.start - self.epoch).total_seconds()
        return (offset_s + (ctx.k + js) * self.step_seconds) / 86400.0

    def predict_horizons(self, ctx: ForecastContext, js) -> np.ndarray:
        js = np.asarray(js, dtype=int)
        basis = self._basis(self._t_days(ctx, js))
        # Row-wise 1-D dots keep each horizon's value identical no matter
        # how the horizons are batched (a matmul may round differently).
        pred = np.array([row @ self.coef for row in basis])
        return np.maximum(pred, 0.0)

    def predict(self, ctx: ForecastContext, j: int) -> float:
        return float(self.predict_horizons(ctx, [j])[0])


def fit(model_id: str, table: TrainingTable, seed: int = 0):
    """Fit one model family on the table. ``persistence`` ignores the
    table beyond validating it; ``seasonal_fourier`` fits against the
    table's backing flow series."""
    if table.n_rows < 1:
        raise EmptyTrainingSet("training table has no rows")
    if model_id == "persistence":
        return PersistenceModel()
    if model_id == "linear":
        return LinearModel.fit(table)
    if model_id == "random_forest":
        return RandomForestModel.fit(table, seed)
    if model_id == "gradient_boosting":
        return GradientBoostingModel.fit(table, seed)
    if model_id == "seasonal_fourier":
        return SeasonalFourierModel.fit(table)
    raise UnknownModelId(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")


def predict(model, ctx: ForecastContext, j: int) -> float:
    """Single-horizon prediction, kg/min (clipped at zero)."""
    return model.predict(ctx, int(j))


SNAPSHOT_FORMAT = "tankmpc-model"
SNAPSHOT_VERSION = 1


def save_model(path, model) -> None:
    """Serialize a fitted model to a versioned binary snapshot."""
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "model_id": model.model_id,
        "model": model,
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_model(path):
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise InputError(f"{path}: not a model snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise InputError(f"{path}: unsupported snapshot version {payload.get('version')}")
    return payload["model"]
