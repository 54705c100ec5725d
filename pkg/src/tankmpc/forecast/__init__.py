"""Hot-water draw forecasting: features, model families, metrics, ensemble."""

from .features import (
    DEFAULT_TAU,
    FEATURE_NAMES,
    ForecastFeatureRow,
    build_feature_matrix,
    build_features,
)
from .models import (
    DAY_STEPS,
    MODEL_IDS,
    DrawForecast,
    ForecastContext,
    TrainingTable,
    build_training_table,
    fit,
    load_model,
    predict,
    save_model,
)
from .metrics import ForecastMetrics, evaluate
from .ensemble import DEFAULT_MEMBERS, EnsembleConfig, ensemble_forecast

__all__ = [
    "DEFAULT_TAU",
    "FEATURE_NAMES",
    "ForecastFeatureRow",
    "build_feature_matrix",
    "build_features",
    "DAY_STEPS",
    "MODEL_IDS",
    "DrawForecast",
    "ForecastContext",
    "TrainingTable",
    "build_training_table",
    "fit",
    "load_model",
    "predict",
    "save_model",
    "ForecastMetrics",
    "evaluate",
    "DEFAULT_MEMBERS",
    "EnsembleConfig",
    "ensemble_forecast",
]
