"""Exception hierarchy shared across the toolkit.

Errors that stem from bad user inputs (files, configs, CLI arguments)
derive from :class:`InputError`; the CLI maps those to exit code 2.
Everything else derives from :class:`TankMpcError` and maps to exit
code 1.
"""


class TankMpcError(Exception):
    """Base class for all toolkit errors."""


class InputError(TankMpcError):
    """Bad user-supplied data or configuration."""


# --- time series ingestion ---

class MissingColumn(InputError):
    pass


class NonMonotoneTimestamps(InputError):
    pass


class GapTooLarge(InputError):
    pass


class NonIntegerRatio(InputError):
    pass


# --- tank model / tuning ---

class DegenerateParams(InputError):
    pass


class SingularAtilde(TankMpcError):
    pass


class InsufficientData(InputError):
    pass


class EmptyGrid(InputError):
    pass


# --- forecasting ---

class InsufficientHistory(TankMpcError):
    pass


class EmptyTrainingSet(InputError):
    pass


class UnknownModelId(InputError):
    pass


class AlignmentError(TankMpcError):
    pass


class UnfittedModel(TankMpcError):
    pass


# --- optimization ---

class Infeasible(TankMpcError):
    """The receding-horizon LP reported infeasibility.

    The penalty terms are soft, so a well-formed problem is always
    feasible; seeing this error indicates a defect in problem assembly.
    """


class SolverFailure(TankMpcError):
    pass


# --- tariffs ---

class MissingHourlyData(InputError):
    pass


# --- scenario analytics ---

class DegenerateData(TankMpcError):
    pass


class MismatchedSpan(TankMpcError):
    pass


class NonpositiveSavings(InputError):
    pass
