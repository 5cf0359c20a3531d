"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""


class UnlearnBenchError(Exception):
    """Base class for all package errors."""


class DataFormatError(UnlearnBenchError):
    """Malformed or truncated input files, missing data, bad splits."""


class NumericalFailureError(UnlearnBenchError):
    """Non-finite values encountered where finiteness is required."""
