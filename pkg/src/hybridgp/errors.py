"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument: wrong shape, out-of-range value, inconsistent config."""


class NumericalError(ArithmeticError):
    """A covariance matrix could not be factorized, even with jitter."""

    def __init__(self, message: str, condition: float = float("nan")):
        super().__init__(message)
        self.condition = condition


class TrainingError(RuntimeError):
    """Every likelihood evaluation during training was non-finite."""


class ForecastError(RuntimeError):
    """No forecaster could produce an envelope."""


class SolverError(RuntimeError):
    """The control optimizer never saw a finite objective."""
