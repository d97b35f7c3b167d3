"""Exception hierarchy. The CLI maps each class to an exit code."""


class KaliumError(Exception):
    """Base class for every error raised by this package."""


class DataError(KaliumError, ValueError):
    """Malformed, missing or implausible input data."""


class SignalQualityError(DataError):
    """A segment, template or T wave failed a quality gate."""


class NumericError(KaliumError, ArithmeticError):
    """A numerical routine could not produce a finite result."""
