"""Exception hierarchy shared by every module."""


class SamTrackError(Exception):
    """Base class for all errors raised by samtrack."""


class ConfigurationError(SamTrackError, ValueError):
    """Bad configuration values or inconsistent parameter shapes."""


class InvalidArgumentError(SamTrackError, ValueError):
    """An argument violates an operation's precondition."""


class StateError(SamTrackError, RuntimeError):
    """The operation is not valid in the object's current state."""


class EmptyMaskError(InvalidArgumentError):
    """A binarized mask contains no foreground pixel."""


class NumericError(SamTrackError, ArithmeticError):
    """A computation produced a non-finite value."""


class DataError(SamTrackError, IOError):
    """Malformed sequence directory, image file or checkpoint."""
