"""Exception hierarchy shared across the package.

Each CLI-facing error family maps to a stable process exit code so shell
pipelines can distinguish bad configs from bad data from numeric blowups.
"""


class DualIntentError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class ConfigError(DualIntentError):
    """Invalid, missing, or contradictory run configuration."""

    exit_code = 2


class DataError(DualIntentError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    """A data file failed to parse; message carries path and line number."""


class ValidationError(DataError):
    """Structurally valid data violated a semantic constraint."""


class NumericError(DualIntentError):
    """Non-finite values or a failed numerical verification."""

    exit_code = 4
