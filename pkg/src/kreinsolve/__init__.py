"""Krein's method for systems of second-kind Fredholm integral equations.

The package solves phi(t) - int_a^b K(t, s) phi(s) ds = f(t) for matrix
kernels by reconstructing phi from the solutions of the truncated equations
on [a, xi], and ships a dense Nystrom solver to check every result against.
"""

__version__ = "0.1.0"

from .errors import (
    KernelError,
    KreinError,
    KreinInapplicableError,
    SingularSystemError,
    SolverInapplicable,
    SpecError,
)
from .grid import Grid, diff_along_xi, integrate, make_grid, prefix_weights, suffix_weights
from .kernels import KernelSpec, KernelTable, VectorTable, catalog, sample_kernel, sample_vector
from .krein import (
    build_accumulator,
    build_family,
    check_condition_37,
    krein_pipeline,
    krein_scalar_formula,
    krein_solve,
)
from .nystrom import resolvent, resolvent_family, solve_full, solve_truncated, solve_via_resolvent
from .symmetric import (
    build_centered_family,
    example_4_1_reduction,
    liouville_check,
    solve_theorem_4_1,
    solve_theorem_4_2,
    symmetry_check,
)
