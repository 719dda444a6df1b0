"""Exception hierarchy shared across the package."""


class MaqaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MaqaError, ValueError):
    """Input data failed validation (empty body, malformed record, ...)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotFoundError(MaqaError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "not found"


class ConfigurationError(MaqaError):
    """Configuration is inconsistent with stored artifacts or itself."""


class ContractError(MaqaError, ValueError):
    """A caller violated an operation's precondition."""


class RetrieverUnavailableError(MaqaError):
    pass


class BackendError(MaqaError):
    """A language-model backend call failed (after retries)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class UnparseableVerdictError(BackendError):
    pass


class VQGParseError(MaqaError):
    """The verification-question generator returned an unusable response."""


class ReaderAbortError(MaqaError):
    """Too many per-passage reading failures for one question."""


class StageError(MaqaError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
