"""Even difference kernels: phi(t) + int H(t - s) phi(s) ds = f(t) with H(-u) = H(u).

Two routes are provided. The first reuses the general machinery on [a, b]
(the truncated families are reflection-symmetric and det M'(xi) cannot
vanish). The second centres the interval on [-L, L] and grows symmetric
windows [-xi, xi], solving

    q(t, xi) + int_{-xi}^{xi} H(t - s) q(s, xi) ds = I,   |t| <= xi,

with M(xi) = int_0^xi q(s, xi) ds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import KernelError, KreinInapplicableError
from .grid import Grid, cumulative_integral, diff_along_xi, make_grid, segment_weights
from .kernels import KernelSpec, KernelTable, VectorTable, catalog, sample_kernel
from .krein import (
    DET_TOL,
    KreinSolution,
    TruncatedFamily,
    _suffix_term,
    build_accumulator,
    check_condition_37,
    krein_pipeline,
)
from .nystrom import ResolventTable, _checked, factorize


def _require_even(table: KernelTable):
    if not (table.is_difference and table.is_even):
        raise KernelError("this operation needs a kernel declared as an even difference kernel")


def symmetry_check(fam: TruncatedFamily, table: KernelTable | None = None) -> float:
    """max ||g(t, xi) - g(a + xi - t, xi)|| over the triangle, and the same for g*.

    On a uniform grid the reflected point of t_i inside [a, t_j] is t_{j-i}.
    """
    if table is not None:
        _require_even(table)
    n = fam.grid.n_nodes
    gap = 0.0
    for j in range(n):
        col, col_s = fam.g[: j + 1, j], fam.g_star[: j + 1, j]
        gap = max(gap, float(np.max(np.abs(col - col[::-1]))), float(np.max(np.abs(col_s - col_s[::-1]))))
    return gap


@dataclass(frozen=True)
class LiouvilleReport:
    det_g_diag: np.ndarray = field(repr=False)
    det_g_star_diag: np.ndarray = field(repr=False)
    exp_trace_integral: np.ndarray = field(repr=False)
    exp_trace_integral_swapped: np.ndarray = field(repr=False)
    max_relative_gap: float
    max_relative_gap_swapped: float
    det_star_gap: float
    min_abs_det: float


def liouville_check(fam: TruncatedFamily, resolvents: list[ResolventTable]) -> LiouvilleReport:
    """Compare det g(xi, xi) with exp(int_a^xi tr Gamma_t(a, t) dt).

    The swapped variant integrates tr Gamma_t(t, a). The transposed-trace form
    for g* has the same exponent because tr X^T = tr X.
    """
    n = fam.grid.n_nodes
    tr = np.array([np.trace(resolvents[j].blocks[0, j]) for j in range(n)])
    tr_swapped = np.array([np.trace(resolvents[j].blocks[j, 0]) for j in range(n)])
    expo = np.exp(cumulative_integral(tr, fam.grid.h))
    expo_sw = np.exp(cumulative_integral(tr_swapped, fam.grid.h))
    g_diag, gs_diag = fam.diagonal()
    det_g = np.linalg.det(g_diag)
    det_gs = np.linalg.det(gs_diag)
    rel = lambda x, y: float(np.max(np.abs(x - y) / np.abs(y)))
    return LiouvilleReport(
        det_g_diag=det_g,
        det_g_star_diag=det_gs,
        exp_trace_integral=expo,
        exp_trace_integral_swapped=expo_sw,
        max_relative_gap=rel(det_g, expo),
        max_relative_gap_swapped=rel(det_g, expo_sw),
        det_star_gap=rel(det_gs, det_g),
        min_abs_det=float(np.min(np.abs(det_g))),
    )


def solve_theorem_4_1(spec: KernelSpec, f: VectorTable):
    """Krein reconstruction for an even difference kernel on f's grid.

    Returns (family, accumulator, solution). det M'(xi) is still checked.
    """
    if not (spec.kind == "difference" and spec.even):
        raise KernelError("expected an even difference kernel")
    table = sample_kernel(spec, f.grid)
    return krein_pipeline(table, f)


def symmetric_variant_formula(fam: TruncatedFamily, acc, f: VectorTable) -> np.ndarray:
    """The reconstruction with g(s, xi) in place of g*(s, xi) inside the moment integral.

    Equal to the general formula whenever g* = g (e.g. scalar even kernels).
    """
    grid = fam.grid
    n = grid.n_nodes
    u = np.empty((n, fam.m), dtype=np.complex128)
    for j in range(n):
        w = segment_weights(grid.h, j + 1).weights
        u[j] = np.einsum("s,sab,sb->a", w, fam.g[: j + 1, j], f.samples[: j + 1])
    v = diff_along_xi(u, grid)
    w_ = np.linalg.solve(acc.M_prime, v[..., None])[..., 0]
    z = diff_along_xi(w_, grid)
    J1 = np.einsum("iab,b->ia", fam.g[:, -1], w_[-1])
    return J1 + _suffix_term(fam, z)


def centered_grid(grid: Grid) -> Grid:
    """Translate ``grid`` onto [-L, L], L = (b - a) / 2. Needs an odd node count."""
    if grid.n_nodes % 2 == 0:
        raise KernelError("centred problems need an odd node count so that 0 is a node")
    half = 0.5 * grid.length
    return make_grid(-half, half, grid.n_nodes)


@dataclass(frozen=True)
class CenteredFamily:
    """q[i, k] = q(t_i, xi_k) on the centred grid, xi_k = k h, defined for |i - c| <= k.

    ``q_star`` solves the same window equation with H composed on the right.
    """

    grid: Grid
    m: int
    q: np.ndarray = field(repr=False)
    q_star: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    M_prime: np.ndarray = field(repr=False)
    det_M_prime: np.ndarray = field(repr=False)
    invertible: np.ndarray = field(repr=False)
    residual: float
    evenness_gap: float

    @property
    def center(self) -> int:
        return (self.grid.n_nodes - 1) // 2

    @property
    def xi(self) -> np.ndarray:
        return self.grid.nodes[self.center :]

    def diagonal(self) -> np.ndarray:
        """q(xi_k, xi_k) for every k."""
        c = self.center
        k = np.arange(c + 1)
        return self.q[c + k, k]


def build_centered_family(table: KernelTable) -> CenteredFamily:
    grid = table.grid
    n, m = grid.n_nodes, table.m
    if n % 2 == 0 or n < 5:
        raise KernelError("centred family needs an odd node count >= 5")
    c = (n - 1) // 2
    q = np.full((n, c + 1, m, m), np.nan, dtype=np.complex128)
    q_star = np.full_like(q, np.nan)
    M = np.empty((c + 1, m, m), dtype=np.complex128)
    res = 0.0
    for k in range(c + 1):
        lo, hi = c - k, c + k + 1
        w = segment_weights(grid.h, 2 * k + 1).weights
        kb = table.blocks[lo:hi, lo:hi]
        kmat = table.matrix(lo, hi)
        a = np.eye(kmat.shape[0]) - kmat * np.repeat(w, m)[None, :]
        fac = _checked(factorize(a), table, hi - 1, "centred truncated system")
        e = np.tile(np.eye(m, dtype=np.complex128), (2 * k + 1, 1))
        sol = fac.solve(e).reshape(2 * k + 1, m, m)
        q[lo:hi, k] = sol
        if m == 1:
            q_star[lo:hi, k] = sol
        else:
            row = np.eye(kmat.shape[0]) - np.repeat(w, m)[:, None] * kmat
            fac_row = _checked(factorize(row), table, hi - 1, "centred row-space system")
            q_star[lo:hi, k] = fac_row.solve(e, trans=1).reshape(2 * k + 1, m, m).transpose(0, 2, 1)
        r = sol - np.einsum("ikab,k,kbc->iac", kb, w, sol) - np.eye(m)
        res = max(res, float(np.max(np.abs(r))))
        half = segment_weights(grid.h, k + 1).weights
        M[k] = np.einsum("i,iab->ab", half, sol[k:])
    Mp = diff_along_xi(M, grid.h)
    det = np.linalg.det(Mp)
    scale = float(np.max(np.linalg.norm(Mp, ord=2, axis=(1, 2))))
    even_gap = 0.0
    for k in range(c + 1):
        col = q[c - k : c + k + 1, k]
        even_gap = max(even_gap, float(np.max(np.abs(col - col[::-1]))))
    q.setflags(write=False)
    q_star.setflags(write=False)
    return CenteredFamily(
        grid, m, q, q_star, M, Mp, det, np.abs(det) > DET_TOL * scale**m, res, even_gap
    )


@dataclass(frozen=True)
class CenteredSolution:
    phi: VectorTable
    terms: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    family: CenteredFamily = field(repr=False)
    needs_oracle_check: bool = False


def _window_moment(fam: CenteredFamily, values: np.ndarray, q: np.ndarray) -> np.ndarray:
    """int_{-xi}^{xi} q(s, xi) values(s) ds for every xi_k."""
    c = fam.center
    out = np.empty((c + 1, values.shape[1]), dtype=np.complex128)
    for k in range(c + 1):
        w = segment_weights(fam.grid.h, 2 * k + 1).weights
        out[k] = np.einsum("s,sab,sb->a", w, q[c - k : c + k + 1, k], values[c - k : c + k + 1])
    return out


def _tail_integral(fam: CenteredFamily, y: np.ndarray) -> np.ndarray:
    """int_{|t|}^{L} q(t, xi) y(xi) dxi at every node t_i."""
    c = fam.center
    n = fam.grid.n_nodes
    out = np.empty((n, y.shape[1]), dtype=np.complex128)
    for i in range(n):
        d = abs(i - c)
        w = segment_weights(fam.grid.h, c - d + 1).weights
        out[i] = np.einsum("k,kab,kb->a", w, fam.q[i, d:], y[d:])
    return out


def solve_theorem_4_2(
    spec: KernelSpec,
    f: VectorTable,
    df: VectorTable | None = None,
    moments: str = "q_star",
) -> CenteredSolution:
    """Three-term reconstruction on the centred interval.

    ``f`` may live on any interval [a, b]; the problem is translated to
    [-L, L], which leaves a difference kernel unchanged. ``df`` is f' on the
    same grid; when omitted it is obtained by finite differences. The
    Stieltjes integral against df is evaluated as int q(s, xi) f'(s) ds.

    Products are ordered q(t, .) M'^-1 [moment]. For m >= 2 the moment
    integrals use q* by default (``moments="q"`` selects q itself, which is
    only consistent when q* = q, e.g. for m = 1); results for m >= 2 are
    flagged for an oracle cross-check.
    """
    if moments not in ("q", "q_star"):
        raise ValueError(f"moments must be 'q' or 'q_star'; got {moments!r}")
    if not (spec.kind == "difference" and spec.even):
        raise KernelError("expected an even difference kernel")
    grid = centered_grid(f.grid)
    table = sample_kernel(spec, grid)
    fam = build_centered_family(table)
    if not fam.invertible.all():
        bad = int(np.argmin(fam.invertible))
        xi = float(fam.xi[bad])
        raise KreinInapplicableError(
            f"Krein formula inapplicable: det M'(xi) vanishes at xi={xi:.6g} on the centred interval",
            xi=xi + 0.5 * (f.grid.a + f.grid.b),
            index=fam.center + bad,
        )
    fs = f.samples
    dfs = diff_along_xi(fs, grid) if df is None else df.samples
    h = grid.h
    Mp_inv = np.linalg.inv(fam.M_prime)
    qm = fam.q_star if moments == "q_star" else fam.q
    v = diff_along_xi(_window_moment(fam, fs, qm), h)
    y = np.einsum("kab,kb->ka", Mp_inv, v)
    z = diff_along_xi(y, h)
    q_end = fam.q[:, -1]
    term1 = 0.5 * np.einsum("iab,b->ia", q_end, y[-1])
    term2 = -0.5 * _tail_integral(fam, z)
    stieltjes = np.einsum("kab,kb->ka", Mp_inv, _window_moment(fam, dfs, qm))
    term3 = -0.5 * diff_along_xi(_tail_integral(fam, stieltjes), h)
    phi = term1 + term2 + term3
    return CenteredSolution(VectorTable(f.grid, phi), (term1, term2, term3), fam, needs_oracle_check=fam.m > 1)


@dataclass(frozen=True)
class ReductionReport:
    q_direct: np.ndarray = field(repr=False)
    q_decoupled: np.ndarray = field(repr=False)
    max_gap: float
    det_q_diag: np.ndarray = field(repr=False)
    det_nonzero: bool
    l1_row_bounds: tuple[float, float]
    l1_full_range: tuple[float, float]
    warned: bool


def _l1_bounds(fn: Callable, grid: Grid) -> tuple[float, float]:
    """(sup_t int_{-L}^{L} |h(t-s)| ds, int_{-2L}^{2L} |h(u)| du) by trapezoid on the grid spacing."""
    n = grid.n_nodes
    u = np.arange(-(n - 1), n) * grid.h
    vals = np.abs(np.array([complex(fn(x)) for x in u]))
    full = float(np.sum(segment_weights(grid.h, len(u)).weights * vals))
    w = segment_weights(grid.h, n).weights
    mid = n - 1
    rows = [np.sum(w * vals[mid + i - np.arange(n)]) for i in range(n)]
    return float(max(rows)), full


def example_4_1_reduction(h1: Callable | float, h2: Callable | float, grid: Grid) -> ReductionReport:
    """Antidiagonal H = [[0, h1], [h2, 0]]: block q-solve against the decoupled scalar system.

    The decoupled route solves the iterated-kernel equations for q11 and q22
    and recovers the off-diagonal entries by one quadrature each.
    """
    spec = catalog("antidiag_block", h1=h1, h2=h2)
    f1 = spec.params["h1"] if callable(spec.params["h1"]) else (lambda _u, c=complex(h1): c)
    f2 = spec.params["h2"] if callable(spec.params["h2"]) else (lambda _u, c=complex(h2): c)
    cgrid = centered_grid(grid)
    fam = build_centered_family(sample_kernel(spec, cgrid))
    n = cgrid.n_nodes
    c = fam.center
    diff = np.subtract.outer(cgrid.nodes, cgrid.nodes)
    H1 = np.vectorize(lambda x: complex(f1(x)), otypes=[complex])(diff)
    H2 = np.vectorize(lambda x: complex(f2(x)), otypes=[complex])(diff)
    q2 = np.full((n, c + 1, 2, 2), np.nan, dtype=np.complex128)
    for k in range(c + 1):
        sl = slice(c - k, c + k + 1)
        w = segment_weights(cgrid.h, 2 * k + 1).weights
        A1 = H1[sl, sl] * w[None, :]
        A2 = H2[sl, sl] * w[None, :]
        eye = np.eye(2 * k + 1)
        ones = np.ones(2 * k + 1)
        q11 = np.linalg.solve(eye - A1 @ A2, ones)
        q22 = np.linalg.solve(eye - A2 @ A1, ones)
        q2[sl, k, 0, 0] = q11
        q2[sl, k, 1, 1] = q22
        q2[sl, k, 0, 1] = -A1 @ q22
        q2[sl, k, 1, 0] = -A2 @ q11
    mask = ~np.isnan(fam.q.real)
    gap = float(np.max(np.abs(fam.q[mask] - q2[mask])))
    det_diag = np.linalg.det(fam.diagonal())
    b1, b2 = _l1_bounds(f1, cgrid), _l1_bounds(f2, cgrid)
    warned = b1[0] >= 1 or b2[0] >= 1
    if warned:
        warnings.warn(
            "L1 bound of h1 or h2 is >= 1; uniqueness of the q-equation is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    return ReductionReport(
        fam.q,
        q2,
        gap,
        det_diag,
        bool(np.all(np.abs(det_diag) > DET_TOL)),
        (b1[0], b2[0]),
        (b1[1], b2[1]),
        warned,
    )
