"""Exception hierarchy shared by the solvers and the CLI."""

from __future__ import annotations


class KreinError(Exception):
    """Base class for all errors raised by this package."""


class GridError(KreinError, ValueError):
    """Invalid grid, weights, or sample shapes."""


class KernelError(KreinError, ValueError):
    """Kernel evaluation failed or violated a declared property."""


class SpecError(KreinError, ValueError):
    """Malformed problem specification."""


class SolverInapplicable(KreinError):
    """A solver cannot produce a unique solution for this problem.

    ``xi`` holds the offending truncation point when one is known.
    """

    def __init__(self, message: str, xi: float | None = None, index: int | None = None):
        super().__init__(message)
        self.xi = xi
        self.index = index


class SingularSystemError(SolverInapplicable):
    """No unique solution at this resolution (numerically singular system)."""


class KreinInapplicableError(SolverInapplicable):
    """Krein formula inapplicable: det M'(xi) vanishes or the family cannot be built."""
