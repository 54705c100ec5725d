"""tankmpc: predictive set-point control toolkit for heat-pump water heaters."""

from .timeseries import CONTROL_STEP, SimClock, TimeSeries, ingest_csv, resample, write_csv
from .tank import (
    BoundaryConditions,
    DiscreteSystem,
    TankParams,
    TankState,
    continuous_matrices,
    discretize,
    make_system,
    step_state,
)

__version__ = "0.1.0"

__all__ = [
    "CONTROL_STEP",
    "SimClock",
    "TimeSeries",
    "ingest_csv",
    "resample",
    "write_csv",
    "BoundaryConditions",
    "DiscreteSystem",
    "TankParams",
    "TankState",
    "continuous_matrices",
    "discretize",
    "make_system",
    "step_state",
    "__version__",
]
