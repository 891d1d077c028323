from typing import Any


class WotlabError(Exception):
    """Base class for every error raised by wotlab."""


class UsageError(WotlabError, ValueError):
    """Malformed input, schema problems, class/metadata mismatch, size guards."""


class DomainError(WotlabError, ValueError):
    """A point lies outside the domain an operation is defined on."""


class NumericalFailure(WotlabError, RuntimeError):
    """A solver could not reach its tolerance."""

    def __init__(self, message: str, best: Any = None) -> None:
        super().__init__(message)
        self.best = best


class OrderViolation(WotlabError):
    """Raised when a dilation is requested for measures that are not ordered."""

    def __init__(self, message: str, certificate: Any) -> None:
        super().__init__(message)
        self.certificate = certificate
