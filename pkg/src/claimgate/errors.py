"""Exception hierarchy shared across modules."""


class ClaimgateError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ClaimgateError):
    """Invalid or inconsistent run configuration."""


class DataError(ClaimgateError):
    """Malformed or invariant-violating input data."""


class SplitFormatError(DataError):
    """A split file record failed validation; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BackendError(ClaimgateError):
    """Base class for model-backend failures."""


class TransportError(BackendError):
    """The backend was unreachable or returned a transport-level failure."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class CapabilityError(BackendError, ConfigError):
    """A required capability is not advertised by the configured backend."""


class ContractViolation(BackendError):
    """A backend output violated its structural contract (logged, degrades to no-op)."""
