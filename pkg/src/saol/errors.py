"""Exception hierarchy. The CLI maps each family to an exit code."""


class SaolError(Exception):
    """Base class for all package errors."""


class DataFormatError(SaolError):
    """Malformed, truncated or inconsistent input file or data."""


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class InvariantError(DataFormatError):
    """Loaded data violates a structural invariant (e.g. non-unit operator rows)."""


class NumericalError(SaolError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class TrainingError(NumericalError):
    """Numerical failure inside the training loop; carries the iteration index."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
