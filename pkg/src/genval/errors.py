"""Exception hierarchy shared by all genval modules.

``GenvalError`` covers everything a user can cause (bad files, bad
parameters, inconsistent inputs); the CLI maps it to exit code 2.
``InternalError`` marks a violated internal invariant and maps to exit
code 3.
"""


class GenvalError(Exception):
    """Base class for user-facing errors."""


class FormatError(GenvalError):
    """A file does not conform to its format grammar."""


class ValidationError(GenvalError):
    """Values or shapes violate a documented precondition."""


class ConfigError(GenvalError):
    """Configuration parameters are inconsistent with the data."""


class CorruptionError(GenvalError):
    """An artifact is internally inconsistent (e.g. out-of-range code)."""


class InternalError(Exception):
    """An internal invariant failed; indicates a bug, not bad input."""
