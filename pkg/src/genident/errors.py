"""Exception types shared across the package."""


class DomainError(ValueError):
    """A precondition on inputs was violated."""


class SolverError(RuntimeError):
    """A numerical procedure failed to converge or broke down."""

    def __init__(self, message, *, residual=None, condition_number=None):
        super().__init__(message)
        self.residual = residual
        self.condition_number = condition_number


class ChainDivergenceError(RuntimeError):
    """A reduction step diagnosed a limit outside the supported chain."""

    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis
