"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericError`` -> 3.
"""


class RadPathError(Exception):
    """Base class for all toolkit errors."""


class DataError(RadPathError, ValueError):
    """Malformed, missing or inconsistent input data."""


class NumericError(RadPathError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""
