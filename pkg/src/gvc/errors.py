"""Exception types shared across the toolkit."""


class GVCError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(GVCError, ValueError):
    """Frame/video dimensions disagree with what was declared or expected."""


class ParseError(GVCError, ValueError):
    """A byte stream could not be parsed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int = -1):
        self.offset = offset
        if offset >= 0:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TrainingDivergenceError(GVCError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, last_finite_loss: float | None = None):
        self.last_finite_loss = last_finite_loss
        super().__init__(f"{message}; last finite loss: {last_finite_loss}")


class ReproducibilityError(GVCError, RuntimeError):
    """The decoder cannot reproduce the encoder's generated frames."""


class IntegrityError(GVCError, AssertionError):
    """A generated frame violates the quality threshold."""

    def __init__(self, message: str, frame_indices: list[int]):
        self.frame_indices = list(frame_indices)
        super().__init__(message)


class ConditioningError(GVCError, ValueError):
    """A covariance matrix is too degenerate to use without shrinkage."""
