"""Exception hierarchy.

The CLI maps these onto exit codes: ``ValidationError`` -> 2,
``NumericalError`` -> 3, ``OSError`` -> 4.
"""


class PhononCountError(Exception):
    """Base class for all package errors."""


class ValidationError(PhononCountError, ValueError):
    """Invalid input value or configuration.

    ``key_path`` names the offending config key (``"cavity.detuning_hz"``)
    when the value came from a config file.
    """

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class DegenerateDetuningError(ValidationError):
    """Drive detuning gives no net cooling (A- <= A+)."""


class UnphysicalRatioError(ValidationError):
    """Raman ratio outside the range the cavity response allows."""


class NonPositiveRateError(ValidationError):
    """Dark-count subtraction leaves a channel with rate <= 0."""


class GridCoverageError(ValidationError):
    """A frequency grid does not cover the filter passband."""


class EmptyStreamError(ValidationError):
    """Too few clicks for a pair analysis."""


class StepSizeError(ValidationError):
    """Simulation would exceed its configured step budget."""


class NumericalError(PhononCountError, RuntimeError):
    """Numerical procedure failed."""


class ConvergenceError(NumericalError):
    """A bracketed minimisation found no interior minimum."""


class LockTimeoutError(NumericalError):
    """A filter cavity failed to lock within its timeout."""

    def __init__(self, message, cavity=None, phase=None):
        self.cavity = cavity
        self.phase = phase
        super().__init__(message)
