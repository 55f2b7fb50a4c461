"""Exception types raised across the package."""


class MtgbnError(Exception):
    """Base class for all package errors."""


class CycleError(MtgbnError, ValueError):
    """A directed graph operation would introduce a cycle."""


class NotDecomposable(MtgbnError):
    """An undirected graph failed the chordality check."""


class NotPositiveDefinite(MtgbnError, ValueError):
    """A Cholesky factorization failed."""


class Overflow(MtgbnError, OverflowError):
    """A matrix built from a log-scale parameterization is not finite."""


class DomainError(MtgbnError, ValueError):
    """An argument lies outside the domain of a function or distribution."""


class DimensionMismatch(MtgbnError, ValueError):
    """Inputs disagree on the number of variables."""


class NonFinite(MtgbnError, FloatingPointError):
    """A leapfrog step produced a non-finite position, momentum or density."""


class ChainDiverged(MtgbnError):
    """HMC acceptance collapsed; carries the EM iteration when known."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration

    def __str__(self):
        base = super().__str__()
        if self.iteration is None:
            return base
        return f"{base} (EM iteration {self.iteration})"


class RetriesExhausted(MtgbnError):
    """Synthetic generation could not produce a positive definite precision."""
