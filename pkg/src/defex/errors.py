"""Exception taxonomy shared by all defex modules.

Every error carries a short ``category`` string used by the command line
front end to pick an exit code and print a stable diagnostic tag.
"""

from __future__ import annotations


class DefexError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class ValidationError(DefexError):
    """A record, invariant, or cross-reference check failed."""

    category = "validation"


class ParseError(ValidationError):
    """A serialized record could not be parsed; message names the line."""

    category = "parse"


class ArgumentError(DefexError, ValueError):
    """A caller-supplied argument is outside the documented domain."""

    category = "argument"


class ConfigurationError(DefexError):
    """Inputs are structurally valid but unusable for the requested run."""

    category = "configuration"


class InputNotFoundError(DefexError):
    """A referenced input path does not exist."""

    category = "input-not-found"


class NumericalError(DefexError):
    """A numerical invariant broke at runtime (non-finite loss etc.)."""

    category = "numerical"


class FingerprintError(ValidationError):
    """A precomputed artifact does not match the model that must consume it."""

    category = "fingerprint"


class TruncationError(ValidationError):
    """An input sequence exceeds the encoder's maximum length; nothing is
    silently truncated."""

    category = "truncation"


class DegenerateVectorError(ArgumentError):
    """A zero vector reached an operation that requires a direction."""

    category = "degenerate-input"


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the documented process exit codes.

    0 success, 1 validation/argument/configuration, 2 I/O, 3 numerical.
    """
    if isinstance(exc, (InputNotFoundError, OSError)):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    return 1
