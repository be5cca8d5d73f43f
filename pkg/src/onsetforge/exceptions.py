"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (format errors exit 3, numeric failures 4).
"""


class OnsetForgeError(Exception):
    """Base class for package errors."""


class InvalidInputError(OnsetForgeError, ValueError):
    """Raised when an argument violates an operation's preconditions."""


class FormatError(OnsetForgeError):
    """Raised for malformed, truncated or mismatched binary/text files."""


class UnsupportedRateError(FormatError):
    """Raised for audio whose sample rate differs from the configured one."""


class NumericError(OnsetForgeError, ArithmeticError):
    """Raised when training produces a non-finite loss."""
