"""Exception hierarchy shared by every subpackage."""


class DainError(Exception):
    """Base class for all library errors."""


class DimensionError(DainError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class StateError(DainError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class NumericError(DainError, ArithmeticError):
    """A non-finite value or a zero variance made a result undefined."""


class AlignmentError(DainError):
    """Affine alignment could not be estimated (degenerate normal equations)."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SpecError(DainError, ValueError):
    """A network specification is invalid."""


class DatasetError(DainError):
    """A dataset tree is missing or unusable."""


class SplitError(DainError):
    """Train/test splits cannot be formed."""


class SamplingError(DainError):
    """A contiguous view window cannot be drawn."""


class EvaluationError(DainError):
    """Evaluation cannot proceed (e.g. empty test set)."""
