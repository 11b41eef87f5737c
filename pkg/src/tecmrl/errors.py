"""Exception hierarchy. The CLI maps each branch to an exit code."""


class TecmError(Exception):
    exit_code = 4


class ValidationError(TecmError, ValueError):
    """Bad configuration or arguments."""

    exit_code = 2


class DataError(TecmError, ValueError):
    """Input data that cannot be processed."""

    exit_code = 3


class InvariantError(TecmError, RuntimeError):
    """An internal invariant was violated."""

    exit_code = 4


class ScoringError(DataError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid or missing vital sign: {field}")


class ConfigParseError(ValidationError):
    pass


class ConfigValidationError(ValidationError):
    pass


class TrainingHalted(InvariantError):
    """Raised when the optimizer sees a non-finite gradient."""
