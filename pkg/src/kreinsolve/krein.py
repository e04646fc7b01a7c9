"""Krein's method for matrix kernels.

For every truncation point xi = t_j the solver computes

    g(t, xi)  - int_a^xi K(t, s) g(s, xi) ds  = I,
    g*(t, xi) - int_a^xi g*(s, xi) K(s, t) ds = I,

the accumulator M(xi) = int_a^xi g(t, xi) dt with M'(xi) = g*(xi, xi) g(xi, xi),
and reconstructs the solution of the full equation as

    phi(t) = g(t, b) M'(b)^-1 v(b) - int_t^b g(t, xi) d/dxi[M'(xi)^-1 v(xi)] dxi,

where v(xi) = d/dxi int_a^xi g*(s, xi) f(s) ds. The factor order above is
normative for m >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KreinInapplicableError, SingularSystemError
from .grid import Grid, cumulative_integral, diff_along_xi, prefix_weights, suffix_weights
from .kernels import KernelTable, VectorTable
from .nystrom import (
    Factorization,
    ResolventTable,
    _checked,
    check_sign_change,
    factor_truncated,
    factorize,
    row_space_matrix,
    resolvent_edges,
)

DET_TOL = 1e-10


@dataclass(frozen=True)
class TruncatedFamily:
    """g[i, j] = g(t_i, xi_j) and g_star[i, j] = g*(t_i, xi_j) for i <= j (NaN above)."""

    grid: Grid
    m: int
    g: np.ndarray = field(repr=False)
    g_star: np.ndarray = field(repr=False)
    residual: float = 0.0
    residual_star: float = 0.0
    max_condition: float = 1.0

    def diagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """g(xi_j, xi_j) and g*(xi_j, xi_j) for every j."""
        idx = np.arange(self.grid.n_nodes)
        return self.g[idx, idx], self.g_star[idx, idx]


def _stacked_identity(n: int, m: int) -> np.ndarray:
    return np.tile(np.eye(m, dtype=np.complex128), (n, 1))


def build_family(K: KernelTable) -> TruncatedFamily:
    """Solve the two truncated identity-right-hand-side equations at every node.

    The g* equation composes the kernel on the right, so its unknowns form a
    block row X with X (I - W K) = [I ... I]; it is solved through the
    transpose of its own LU factors, not by transposing K entrywise.
    """
    grid, m = K.grid, K.m
    n = grid.n_nodes
    g = np.full((n, n, m, m), np.nan, dtype=np.complex128)
    gs = np.full_like(g, np.nan)
    res = res_star = 0.0
    cond = 1.0
    prev: Factorization | None = None
    for j in range(n):
        fac = factor_truncated(K, j)
        check_sign_change(K, prev, fac, j)
        prev = fac
        fac_row = _checked(factorize(row_space_matrix(K, j)), K, j, "row-space truncated system")
        cond = max(cond, fac.condition, fac_row.condition)

        e = _stacked_identity(j + 1, m)
        col = fac.solve(e)
        g[: j + 1, j] = col.reshape(j + 1, m, m)
        x = fac_row.solve(e, trans=1)
        gs[: j + 1, j] = x.reshape(j + 1, m, m).transpose(0, 2, 1)

        w = prefix_weights(grid, j).weights
        kb = K.blocks[: j + 1, : j + 1]
        r = g[: j + 1, j] - np.einsum("ikab,k,kbc->iac", kb, w, g[: j + 1, j]) - np.eye(m)
        rs = gs[: j + 1, j] - np.einsum("kab,k,kibc->iac", gs[: j + 1, j], w, kb) - np.eye(m)
        res = max(res, float(np.max(np.abs(r))))
        res_star = max(res_star, float(np.max(np.abs(rs))))
    g.setflags(write=False)
    gs.setflags(write=False)
    return TruncatedFamily(grid, m, g, gs, res, res_star, cond)


def representation_gaps(fam: TruncatedFamily, resolvents: list[ResolventTable]) -> tuple[float, float]:
    """Max of ||g(t,xi) - I - int Gamma_xi(t,s) ds|| and ||g*(t,xi) - I - int Gamma_xi(s,t) ds||."""
    eye = np.eye(fam.m)
    gap = gap_star = 0.0
    for r in resolvents:
        j = r.xi_index
        w = prefix_weights(fam.grid, j).weights
        rep = eye + np.einsum("k,ikab->iab", w, r.blocks)
        rep_star = eye + np.einsum("k,kiab->iab", w, r.blocks)
        gap = max(gap, float(np.max(np.abs(fam.g[: j + 1, j] - rep))))
        gap_star = max(gap_star, float(np.max(np.abs(fam.g_star[: j + 1, j] - rep_star))))
    return gap, gap_star


def family_xi_derivative_residuals(fam: TruncatedFamily, resolvents: list[ResolventTable]) -> dict:
    """Residuals of the xi-derivative identities along each row t_i.

    ``g``:        d/dxi g(t,xi)  - Gamma_xi(t,xi) g(xi,xi)
    ``g_star``:   d/dxi g*(t,xi) - g*(xi,xi) Gamma_xi(xi,t)
    ``g_star_swapped``: the same with Gamma_xi(t,xi), which agrees only when
    the resolvent is symmetric in its arguments.
    """
    n = fam.grid.n_nodes
    if n < 3:
        raise ValueError("need at least 3 xi nodes")
    to_xi, from_xi = resolvent_edges(resolvents)
    g_diag, gs_diag = fam.diagonal()
    out = {"g": 0.0, "g_star": 0.0, "g_star_swapped": 0.0}
    for i in range(n - 2):
        jj = np.arange(i, n)
        d_g = diff_along_xi(fam.g[i, i:], fam.grid.h)
        d_gs = diff_along_xi(fam.g_star[i, i:], fam.grid.h)
        gam_t_xi = to_xi[i, i:]
        gam_xi_t = from_xi[i, i:]
        rhs = np.einsum("jab,jbc->jac", gam_t_xi, g_diag[jj])
        rhs_star = np.einsum("jab,jbc->jac", gs_diag[jj], gam_xi_t)
        rhs_swapped = np.einsum("jab,jbc->jac", gs_diag[jj], gam_t_xi)
        out["g"] = max(out["g"], float(np.max(np.abs(d_g - rhs))))
        out["g_star"] = max(out["g_star"], float(np.max(np.abs(d_gs - rhs_star))))
        out["g_star_swapped"] = max(out["g_star_swapped"], float(np.max(np.abs(d_gs - rhs_swapped))))
    return out


def family_xi_derivative_check(fam: TruncatedFamily, resolvents: list[ResolventTable]) -> float:
    r = family_xi_derivative_residuals(fam, resolvents)
    return max(r["g"], r["g_star"])


@dataclass(frozen=True)
class Accumulator:
    M: np.ndarray = field(repr=False)
    M_prime: np.ndarray = field(repr=False)
    det_M_prime: np.ndarray = field(repr=False)
    invertible: np.ndarray = field(repr=False)
    M_star: np.ndarray = field(repr=False)
    M_integrated: np.ndarray = field(repr=False)
    route_gap: float
    star_route_gap: float
    det_order_gap: float
    scale: float
    grid: Grid = field(repr=False)


def build_accumulator(fam: TruncatedFamily) -> Accumulator:
    """M by prefix quadrature of g, M' = g*(xi,xi) g(xi,xi), and the integrated-M' route."""
    grid, m = fam.grid, fam.m
    n = grid.n_nodes
    M = np.empty((n, m, m), dtype=np.complex128)
    M_star = np.empty_like(M)
    for j in range(n):
        w = prefix_weights(grid, j).weights
        M[j] = np.einsum("i,iab->ab", w, fam.g[: j + 1, j])
        M_star[j] = np.einsum("i,iab->ab", w, fam.g_star[: j + 1, j])
    g_diag, gs_diag = fam.diagonal()
    Mp = np.einsum("jab,jbc->jac", gs_diag, g_diag)
    M_int = cumulative_integral(Mp, grid.h)
    det = np.linalg.det(Mp)
    det_rev = np.linalg.det(np.einsum("jab,jbc->jac", g_diag, gs_diag))
    det_order_gap = float(np.max(np.abs(det - det_rev) / np.maximum(np.abs(det), 1e-300)))
    scale = float(np.max(np.linalg.norm(Mp, ord=2, axis=(1, 2))))
    invertible = np.abs(det) > DET_TOL * scale**m
    return Accumulator(
        M=M,
        M_prime=Mp,
        det_M_prime=det,
        invertible=invertible,
        M_star=M_star,
        M_integrated=M_int,
        route_gap=float(np.max(np.abs(M - M_int))),
        star_route_gap=float(np.max(np.abs(M - M_star))),
        det_order_gap=det_order_gap,
        scale=scale,
        grid=grid,
    )


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    min_abs_det: float
    flags: np.ndarray = field(repr=False)
    first_bad_index: int | None = None
    first_bad_xi: float | None = None


def check_condition_37(acc: Accumulator) -> ConditionReport:
    """Check that det M'(xi) is bounded away from zero at every node."""
    flags = np.asarray(acc.invertible, dtype=bool)
    min_det = float(np.min(np.abs(acc.det_M_prime)))
    if flags.all():
        return ConditionReport(True, min_det, flags)
    bad = int(np.argmin(flags))
    return ConditionReport(False, min_det, flags, bad, float(acc.grid.nodes[bad]))


@dataclass(frozen=True)
class KreinSolution:
    phi: VectorTable
    J1: VectorTable
    J2: VectorTable
    condition_37_ok: bool
    min_abs_det_M_prime: float


def _moment_derivative(fam: TruncatedFamily, f: VectorTable) -> tuple[np.ndarray, np.ndarray]:
    """u(xi) = int_a^xi g*(s,xi) f(s) ds at every node and v = du/dxi."""
    grid = fam.grid
    n = grid.n_nodes
    u = np.empty((n, f.m), dtype=np.complex128)
    for j in range(n):
        w = prefix_weights(grid, j).weights
        u[j] = np.einsum("s,sab,sb->a", w, fam.g_star[: j + 1, j], f.samples[: j + 1])
    return u, diff_along_xi(u, grid)


def _suffix_term(fam: TruncatedFamily, z: np.ndarray) -> np.ndarray:
    """-int_t^b g(t,xi) z(xi) dxi at every node t_i."""
    n = fam.grid.n_nodes
    out = np.zeros((n, z.shape[1]), dtype=np.complex128)
    for i in range(n):
        w = suffix_weights(fam.grid, i).weights
        out[i] = -np.einsum("j,jab,jb->a", w, fam.g[i, i:], z[i:])
    return out


def krein_solve(fam: TruncatedFamily, acc: Accumulator, f: VectorTable) -> KreinSolution:
    report = check_condition_37(acc)
    if not report.ok:
        raise KreinInapplicableError(
            f"Krein formula inapplicable: det M'(xi) vanishes at xi={report.first_bad_xi:.6g}",
            xi=report.first_bad_xi,
            index=report.first_bad_index,
        )
    if f.m != fam.m or f.grid.n_nodes != fam.grid.n_nodes:
        raise ValueError("right-hand side does not match the family's grid or block size")
    _, v = _moment_derivative(fam, f)
    w = np.linalg.solve(acc.M_prime, v[..., None])[..., 0]
    z = diff_along_xi(w, fam.grid)
    last = fam.grid.n_nodes - 1
    J1 = np.einsum("iab,b->ia", fam.g[:, last], w[last])
    J2 = _suffix_term(fam, z)
    grid = fam.grid
    return KreinSolution(
        VectorTable(grid, J1 + J2),
        VectorTable(grid, J1),
        VectorTable(grid, J2),
        True,
        report.min_abs_det,
    )


def krein_scalar_formula(fam: TruncatedFamily, f: VectorTable) -> np.ndarray:
    """Scalar (m = 1) form: bracket at xi = b times g(t, b), with M' = g(xi,xi) g*(xi,xi)."""
    if fam.m != 1:
        raise ValueError("the scalar formula needs m = 1")
    grid = fam.grid
    n = grid.n_nodes
    g_diag, gs_diag = fam.diagonal()
    mp = g_diag[:, 0, 0] * gs_diag[:, 0, 0]
    _, v = _moment_derivative(fam, f)
    ratio = v[:, 0] / mp
    dratio = diff_along_xi(ratio, grid)
    phi = np.empty(n, dtype=np.complex128)
    for i in range(n):
        w = suffix_weights(grid, i).weights
        phi[i] = ratio[-1] * fam.g[i, -1, 0, 0] - np.sum(w * fam.g[i, i:, 0, 0] * dratio[i:])
    return phi


def krein_pipeline(K: KernelTable, f: VectorTable):
    """Family, accumulator and reconstruction in one call.

    A singular truncated system is reported as the Krein formula being
    inapplicable at that xi.
    """
    try:
        fam = build_family(K)
    except SingularSystemError as exc:
        raise KreinInapplicableError(f"Krein formula inapplicable: {exc}", xi=exc.xi, index=exc.index) from exc
    acc = build_accumulator(fam)
    return fam, acc, krein_solve(fam, acc, f)
