"""Exception types shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class DknError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DknError):
    """Operands have incompatible shapes; message names both shapes."""


class UnknownIdError(DknError, KeyError):
    """A vocabulary / table lookup failed; message names the offending id."""

    def __str__(self):  # KeyError quotes its arg, which mangles messages
        return Exception.__str__(self)


class ConfigError(DknError):
    """A configuration value is invalid or inconsistent."""


class DataError(DknError):
    """An input file is malformed; message carries the line number."""


class NumericError(DknError):
    """A non-finite value appeared where finite numbers are required."""


class ContractViolation(DknError):
    """An operation was called outside its stated preconditions."""


class CheckpointError(DknError):
    """A model checkpoint could not be read or does not match expectations."""
