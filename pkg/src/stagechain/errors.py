class StagechainError(Exception):
    """Base class for all library errors."""


class ValidationError(StagechainError):
    """Invalid data or configuration (CLI exit code 2)."""


class FormatError(StagechainError):
    """Unreadable or corrupt artifact file."""


class TrainingError(StagechainError):
    """Training diverged or could not run (CLI exit code 3)."""
