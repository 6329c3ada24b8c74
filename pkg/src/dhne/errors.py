"""Exception types raised across the package."""


class DhneError(Exception):
    """Base class for every error raised by dhne."""


class ConfigError(DhneError, ValueError):
    """A configuration value is out of its allowed range."""


class ParseError(DhneError, ValueError):
    """Input text could not be parsed."""


class ShapeError(DhneError, ValueError):
    """An array does not have the shape an operation expects."""


class NumericError(DhneError, ArithmeticError):
    """A computation produced a non-finite value."""


class DivergedError(NumericError):
    """Training produced a non-finite loss."""


class DomainError(DhneError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class SamplingExhaustedError(DhneError, RuntimeError):
    """No negative candidate could be found within the retry budget."""


class FormatError(DhneError, ValueError):
    """A snapshot or data file is corrupt, truncated or of the wrong version."""


class ProtocolError(DhneError, ValueError):
    """An evaluation protocol was called with unusable inputs."""
