class CCMLError(Exception):
    """Base class for errors raised by the ccml package."""


class ValidationError(CCMLError, ValueError):
    """Invalid arguments, shapes, or configuration."""


class StateError(CCMLError, RuntimeError):
    """An operation was called on an object missing required state."""


class ParseError(CCMLError, ValueError):
    """A dataset or checkpoint file could not be parsed."""


class TrainingError(CCMLError, RuntimeError):
    """Training diverged or produced a non-finite loss."""
