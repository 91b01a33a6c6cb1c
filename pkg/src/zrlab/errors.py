"""Exception types shared across the package."""


class ZrlabError(Exception):
    """Base class for all package errors."""


class DomainError(ZrlabError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConvergenceError(ZrlabError, RuntimeError):
    """An iterative procedure or series failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class ConfigError(ZrlabError, ValueError):
    """Invalid run configuration."""
