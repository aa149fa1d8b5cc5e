class PlumeSeekError(Exception):
    pass


class ParameterError(PlumeSeekError, ValueError):
    """Invalid model or configuration parameter."""


class DimensionError(ParameterError):
    pass


class NumericalError(PlumeSeekError, ArithmeticError):
    """A linear-algebra step failed even after regularization."""


class LifecycleError(PlumeSeekError, RuntimeError):
    """An episode was driven past its terminal state."""


class TrainingError(PlumeSeekError, FloatingPointError):
    pass


class FormatError(PlumeSeekError, ValueError):
    """Malformed input file; the message carries the offending line."""


class UsageError(PlumeSeekError, ValueError):
    """Bad command-line invocation or config content."""
