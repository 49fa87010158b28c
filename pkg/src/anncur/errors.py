"""Exception bases shared across the package.

The command line maps these onto exit codes: bad input data is
distinguished from runtime failures such as a factorization that does
not go through.
"""


class AnncurError(Exception):
    """Base class for all package errors."""


class DataError(AnncurError):
    """Input data is malformed, inconsistent, or out of contract."""


class ParseError(DataError):
    """A file could not be parsed; the message carries path and line number."""


class DimMismatch(DataError):
    """Vectors or matrices disagree on dimensionality."""


class NumericalFailure(AnncurError):
    """A numerical routine could not complete (e.g. factorization failed)."""
