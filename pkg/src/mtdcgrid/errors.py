"""Exception types shared across the package."""


class MtdcError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MtdcError):
    """Invalid input data: bad dimensions, non-positive parameters, malformed config."""


class ConnectivityError(ValidationError):
    """A graph that must be connected is not."""


class NumericalError(MtdcError):
    """A numerical routine failed (singular solve, eigensolver breakdown, NaN state)."""


class SearchRangeError(MtdcError):
    """A bracketing search was given a range without a stable/unstable sign change."""
