"""Exception hierarchy shared across the package."""


class LagCausalError(Exception):
    """Base class for every error raised on purpose by this package."""


class InvalidLagError(LagCausalError, ValueError):
    pass


class DegenerateInputError(LagCausalError, ValueError):
    """Input cannot be featurized (constant column, non-finite values...)."""


class InsufficientSamplesError(LagCausalError, ValueError):
    pass


class InsufficientHistoryError(LagCausalError, ValueError):
    pass


class UnstableProcessError(LagCausalError, RuntimeError):
    pass


class InvalidTrainingSetError(LagCausalError, ValueError):
    pass


class ShapeError(LagCausalError, ValueError):
    pass


class ModelFormatError(LagCausalError, ValueError):
    """Model file is truncated, corrupt or otherwise unreadable."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IncompatibleModelError(LagCausalError, ValueError):
    """Model file version or feature names do not match this build."""


class ConsistencyError(LagCausalError, ValueError):
    pass


class SchemaError(LagCausalError, ValueError):
    """An input file does not follow the expected layout."""
