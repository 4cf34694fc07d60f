"""Exception hierarchy shared across the package.

Each class maps to a CLI exit code (see `edgepipe.cli`).
"""


class EdgePipeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(EdgePipeError):
    """Invalid protocol/experiment configuration."""

    exit_code = 2


class DataError(EdgePipeError):
    """Dataset ingestion or consistency failure."""

    exit_code = 3


class NumericalConditionError(EdgePipeError):
    """A numerical precondition of the bounds is violated (e.g. no contraction)."""

    exit_code = 4
