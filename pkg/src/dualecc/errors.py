"""Exception types raised across the package."""


class DualEccError(Exception):
    """Base class for all package errors."""


class ValidationError(DualEccError, ValueError):
    """Input data violates a type invariant."""


class ConvergenceError(DualEccError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class NotPSDError(DualEccError, ValueError):
    """A matrix expected to be positive semidefinite is not."""


class StageError(DualEccError, RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
