"""Exception hierarchy shared across the pipeline."""


class AgricafError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(AgricafError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class ParseError(AgricafError):
    """A malformed input file; carries the offending location."""

    def __init__(self, message: str, path: str = "", row: int | None = None, column: str = ""):
        loc = path
        if row is not None:
            loc += f":{row}"
        if column:
            loc += f" (column {column})"
        super().__init__(f"{message} [{loc}]" if loc else message)
        self.path = path
        self.row = row
        self.column = column


class DataValidationError(AgricafError):
    """A hard invariant violation found while validating parsed inputs."""


class DomainError(AgricafError, ValueError):
    """A value outside the mathematical domain of an operation."""


class ConfigurationError(AgricafError):
    """Required configuration or reference data is missing or inconsistent."""


class DegenerateInputError(AgricafError, ValueError):
    """Input is formally valid but statistically degenerate (e.g. constant)."""


class FitError(AgricafError):
    """Model estimation failed; may carry the best point reached."""

    def __init__(self, message: str, best_params=None):
        super().__init__(message)
        self.best_params = best_params


class InsufficientDataError(AgricafError):
    """Too few observations for the requested analysis; the cell is skippable."""


class StageError(AgricafError):
    """A pipeline stage cannot produce its output for a cell."""


class PrerequisiteError(AgricafError):
    """A stage was invoked before its declared prerequisites exist."""

    def __init__(self, message: str, missing: str = ""):
        super().__init__(message)
        self.missing = missing
