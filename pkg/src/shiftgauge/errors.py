"""Exception hierarchy shared by every module."""


class ShiftGaugeError(Exception):
    """Base class for all package errors."""


class ShapeError(ShiftGaugeError, ValueError):
    pass


class InputError(ShiftGaugeError, ValueError):
    pass


class FormatError(ShiftGaugeError, ValueError):
    pass


class ConfigError(ShiftGaugeError, ValueError):
    pass


class MetricError(ShiftGaugeError, ValueError):
    pass


class OracleError(ShiftGaugeError, ValueError):
    pass


class TrainingError(ShiftGaugeError, RuntimeError):
    """Non-finite loss or gradient during optimization."""

    def __init__(self, message: str, step: int | None = None, epoch: int | None = None):
        super().__init__(message)
        self.step = step
        self.epoch = epoch


class EstimationError(ShiftGaugeError, RuntimeError):
    """An estimator could not produce a valid value.

    ``best_value`` carries the best (possibly infeasible) value seen, if any.
    """

    def __init__(self, message: str, best_value: float | None = None):
        super().__init__(message)
        self.best_value = best_value
