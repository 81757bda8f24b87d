"""
Exception hierarchy for waveshape-nilm.

Every error carries the process exit code the CLI reports for it:
2 configuration, 3 data, 4 numeric failure.
"""


class NilmError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


# Configuration and arguments (exit 2)


class ConfigError(NilmError):
    """Invalid configuration document or setting."""

    exit_code = 2


class ArgumentError(ConfigError, ValueError):
    """A function argument is outside its documented domain."""


# Data (exit 3)


class DataError(NilmError):
    """Input data is missing, malformed or insufficient."""

    exit_code = 3


class SizeError(DataError, ValueError):
    """Sequence length violates a size precondition (empty, non power of two)."""


class LoadError(DataError):
    """A corpus or database file could not be loaded."""


class MissingHeaderError(LoadError):
    """Corpus directory has no header file."""


class HeaderError(LoadError):
    """Header file is present but incomplete or inconsistent."""


class SampleCountError(LoadError):
    """Channel files disagree on the number of samples."""


class RowParseError(LoadError):
    """A row of a numeric text file could not be parsed."""

    def __init__(self, message: str, rows=None):
        super().__init__(message)
        self.rows = list(rows or [])


class VersionMismatchError(LoadError):
    """File schema or version is not the one this reader understands."""


class ConcurrentWriteError(DataError):
    """Another writer holds the lock on a database file."""


class BoundaryError(DataError):
    """Requested window reaches past the edge of a stream."""


class MalformedSignalError(DataError):
    """Signal lacks a structure the operation relies on (e.g. zero crossings)."""


class StateError(DataError):
    """Object is not in a state that supports the operation."""


class InsufficientDataError(DataError):
    """Too few examples remain after filtering to run an experiment."""


# Numerics (exit 4)


class NumericError(NilmError, ArithmeticError):
    """A numerical procedure failed or produced non-finite values."""

    exit_code = 4


class DegenerateInputError(NumericError):
    """Input has zero energy where a non-zero signal is required."""


class DegenerateFundamentalError(NumericError):
    """Current has no measurable fundamental component."""


class DegenerateVoltageError(NumericError):
    """Voltage cycle is flat; the V-I trajectory has no extent."""


class TrainingStalledError(NumericError):
    """Levenberg-Marquardt damping grew past its limit on singular systems."""


class InputScalingError(NumericError):
    """Kernel evaluations overflowed; features need rescaling."""


class InvariantViolation(NumericError):
    """An internal monotonicity or feasibility invariant was broken."""
