"""Exception types shared across the package.

The CLI maps each family to a distinct exit code, so library code should
raise these rather than bare ValueError where the failure is meaningful
to a caller.
"""


class TalcilError(Exception):
    """Base class for all package errors."""


class SpecError(TalcilError):
    """A configuration / experiment spec is malformed or inconsistent."""


class DomainError(TalcilError, ValueError):
    """An argument is outside the mathematical domain of an operation.

    Covers empty sequences, dimension mismatches, out-of-range memory or
    steepness parameters, empty batches and violated preconditions.
    """


class SolverError(TalcilError):
    """A numerical solver failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TrainingError(TalcilError):
    """Training diverged; carries the global step index where it happened."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
