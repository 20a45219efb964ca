"""Exception types shared across the package."""


class KrflabError(Exception):
    """Base class for all krflab errors."""


class ConfigError(KrflabError):
    """Malformed scenario configuration or unsupported model variant."""


class DomainError(KrflabError):
    """Input outside the mathematical domain of an operation."""


class PositivityError(KrflabError):
    """Discrete Kahler positivity violated (some eigen-coefficient at or below the floor)."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class UnsupportedOperationError(KrflabError):
    """Operation not available on this backend."""


class DiagnosticError(KrflabError):
    """Estimate/report preconditions not met (too few snapshots, regime mismatch, ...)."""
