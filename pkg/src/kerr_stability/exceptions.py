"""Exception hierarchy for kerr_stability."""

from typing import Any


class KerrStabilityError(Exception):
    """Base class for all errors raised by kerr_stability."""


class DomainError(KerrStabilityError, ValueError):
    """A point or parameter lies outside the admissible domain."""


class DimensionMismatchError(KerrStabilityError, ValueError):
    """Operands of an operator expression have incompatible shapes."""


class NotHermitianError(KerrStabilityError, ValueError):
    """A matrix that must be Hermitian is not."""


class ConfigError(KerrStabilityError, ValueError):
    """Configuration content failed validation."""


class EigenSolverError(KerrStabilityError, RuntimeError):
    """An eigen-solve failed to converge or produced nonfinite values."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EvolutionError(KerrStabilityError, RuntimeError):
    """Time integration aborted.

    The last finite snapshot is kept on the exception so that callers can
    report how far the run got.
    """

    def __init__(
        self,
        message: str,
        last_time: float | None = None,
        last_state: Any = None,
    ):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state
