"""Dense Nystrom discretization: the direct solver used as an oracle.

The truncated system on nodes t_0..t_j is

    phi_i - sum_k w_k K(t_i, t_k) phi_k = f_i,      i = 0..j,

with trapezoid prefix weights w. Its matrix (I - K W) is factorized once by
LU with partial pivoting; the reciprocal condition number from LAPACK's
``gecon`` decides whether the system is numerically singular.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import SingularSystemError
from .grid import Grid, diff_along_xi, prefix_weights, suffix_weights
from .kernels import KernelTable, VectorTable

COND_LIMIT = 1e12
EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class Factorization:
    """LU factors of a square matrix plus its 1-norm condition estimate."""

    lu: np.ndarray = field(repr=False)
    piv: np.ndarray = field(repr=False)
    rcond: float
    det_sign: complex
    log_abs_det: float

    @property
    def condition(self) -> float:
        return np.inf if self.rcond == 0.0 else 1.0 / self.rcond

    def solve(self, rhs: np.ndarray, trans: int = 0) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), rhs, trans=trans, check_finite=False)


def factorize(a: np.ndarray) -> Factorization:
    a = np.asarray(a, dtype=np.complex128)
    anorm = float(np.linalg.norm(a, 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    gecon = lapack.get_lapack_funcs("gecon", (lu,))
    diag = np.diag(lu)
    if np.any(diag == 0) or not np.all(np.isfinite(lu)):
        rcond = 0.0
    else:
        rcond, info = gecon(lu, anorm, norm="1")
        rcond = float(rcond) if info == 0 else 0.0
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    with np.errstate(divide="ignore"):
        absd = np.abs(diag)
        sign = (-1.0) ** swaps * np.prod(diag / np.where(absd == 0, 1.0, absd))
        logdet = float(np.sum(np.log(absd)))
    return Factorization(lu, piv, rcond, complex(sign), logdet)


def lu_tolerance(fac: Factorization, scale: float = 1.0) -> float:
    """Backward-stable residual scale n * eps * cond * scale for solves with ``fac``."""
    n = fac.lu.shape[0]
    return n * EPS * min(fac.condition, 1.0 / EPS) * max(scale, 1.0)


def _weights_column(K: KernelTable, j: int) -> np.ndarray:
    return np.repeat(prefix_weights(K.grid, j).weights, K.m)


def truncated_matrix(K: KernelTable, j: int) -> np.ndarray:
    """I - K_j W_j for the prefix t_0..t_j, flattened to ((j+1)m)^2."""
    kj = K.matrix(0, j + 1)
    return np.eye(kj.shape[0]) - kj * _weights_column(K, j)[None, :]


def row_space_matrix(K: KernelTable, j: int) -> np.ndarray:
    """I - W_j K_j, the matrix of kernel-on-the-right equations solved for row unknowns."""
    kj = K.matrix(0, j + 1)
    return np.eye(kj.shape[0]) - _weights_column(K, j)[:, None] * kj


def _checked(fac: Factorization, K: KernelTable, j: int, what: str) -> Factorization:
    if fac.rcond < 1.0 / COND_LIMIT:
        xi = float(K.grid.nodes[j])
        raise SingularSystemError(
            f"no unique solution at this resolution: {what} at xi={xi:.6g} "
            f"(node {j}) has condition estimate {fac.condition:.3e}",
            xi=xi,
            index=j,
        )
    return fac


def factor_truncated(K: KernelTable, j: int) -> Factorization:
    return _checked(factorize(truncated_matrix(K, j)), K, j, "truncated system")


def _is_real(K: KernelTable) -> bool:
    return not np.any(K.blocks.imag)


def check_sign_change(K: KernelTable, previous: Factorization | None, current: Factorization, j: int):
    """Detect a zero of the truncated Fredholm determinant between two nodes.

    For a real kernel det(I - K_j W_j) is real and starts at 1; a sign flip
    between consecutive nodes means the truncated operator passed through an
    eigenvalue one at some xi strictly between them.
    """
    if previous is None or not _is_real(K):
        return
    if np.sign(previous.det_sign.real) != np.sign(current.det_sign.real):
        lo, hi = K.grid.nodes[j - 1], K.grid.nodes[j]
        raise SingularSystemError(
            f"no unique solution at this resolution: truncated determinant changes "
            f"sign between xi={lo:.6g} and xi={hi:.6g}",
            xi=float(hi),
            index=j,
        )


@dataclass(frozen=True)
class DirectSolve:
    samples: np.ndarray = field(repr=False)
    residual_norm: float
    relative_residual: float
    matrix_condition_estimate: float
    grid: Grid | None = field(default=None, repr=False)

    @property
    def phi(self) -> VectorTable:
        return VectorTable(self.grid, self.samples)


def nystrom_residual(K: KernelTable, phi: np.ndarray, f: np.ndarray, j: int | None = None) -> tuple[float, float]:
    """Absolute and relative sup-norm residual of the discretized equation on t_0..t_j."""
    j = K.grid.n_nodes - 1 if j is None else j
    w = prefix_weights(K.grid, j).weights
    kb = K.blocks[: j + 1, : j + 1]
    phi = np.asarray(phi)[: j + 1]
    f = np.asarray(f)[: j + 1]
    r = phi - np.einsum("ikab,k,kb->ia", kb, w, phi) - f
    res = float(np.max(np.abs(r)))
    op_norm = float(np.max(np.sum(np.abs(kb) * w[None, :, None, None], axis=(1, 3)))) if kb.size else 0.0
    scale = float(np.max(np.abs(f))) + op_norm * float(np.max(np.abs(phi)))
    return res, (res / scale if scale else res)


def solve_truncated(K: KernelTable, f: VectorTable, xi_index: int) -> DirectSolve:
    j = int(xi_index)
    fac = factor_truncated(K, j)
    rhs = f.samples[: j + 1].reshape(-1)
    phi = fac.solve(rhs).reshape(j + 1, K.m)
    res, rel = nystrom_residual(K, phi, f.samples, j)
    grid = K.grid if j == K.grid.n_nodes - 1 else None
    return DirectSolve(phi, res, rel, fac.condition, grid)


def solve_full(K: KernelTable, f: VectorTable) -> DirectSolve:
    """Solve phi - int_a^b K phi = f on the whole grid."""
    if f.grid.n_nodes != K.grid.n_nodes or f.m != K.m:
        raise ValueError("kernel and right-hand side live on different grids or block sizes")
    return solve_truncated(K, f, K.grid.n_nodes - 1)


@dataclass(frozen=True)
class ResolventTable:
    """Gamma_xi(t_p, t_q) for xi = t_j on the square [a, xi]^2."""

    xi_index: int
    blocks: np.ndarray = field(repr=False)
    residual_first: float
    residual_second: float
    tolerance: float
    condition: float


def _unflatten(mat: np.ndarray, n: int, m: int) -> np.ndarray:
    return mat.reshape(n, m, n, m).transpose(0, 2, 1, 3)


def resolvent(K: KernelTable, xi_index: int, fac: Factorization | None = None) -> ResolventTable:
    """Solve Gamma - K W Gamma = K on t_0..t_j; verify Gamma - Gamma W K = K."""
    j = int(xi_index)
    fac = factor_truncated(K, j) if fac is None else fac
    kj = K.matrix(0, j + 1)
    w = _weights_column(K, j)
    gam = fac.solve(kj)
    first = gam - (kj * w[None, :]) @ gam - kj
    second = gam - (gam * w[None, :]) @ kj - kj
    tol = lu_tolerance(fac, float(np.max(np.abs(kj))) if kj.size else 1.0)
    blocks = _unflatten(gam, j + 1, K.m)
    blocks.setflags(write=False)
    return ResolventTable(
        j,
        blocks,
        float(np.max(np.abs(first))),
        float(np.max(np.abs(second))),
        tol,
        fac.condition,
    )


def resolvent_family(K: KernelTable) -> list[ResolventTable]:
    """Resolvents at every node xi = t_0..t_{N-1}."""
    out = []
    prev = None
    for j in range(K.grid.n_nodes):
        fac = factor_truncated(K, j)
        check_sign_change(K, prev, fac, j)
        out.append(resolvent(K, j, fac))
        prev = fac
    return out


def stack_resolvents(resolvents: list[ResolventTable]) -> np.ndarray:
    """Dense array G[j, p, q] = Gamma_{t_j}(t_p, t_q), NaN where p or q > j. O(N^3) memory."""
    n = len(resolvents)
    m = resolvents[0].blocks.shape[-1]
    out = np.full((n, n, n, m, m), np.nan, dtype=np.complex128)
    for r in resolvents:
        j = r.xi_index
        out[j, : j + 1, : j + 1] = r.blocks
    return out


def resolvent_edges(resolvents: list[ResolventTable]) -> tuple[np.ndarray, np.ndarray]:
    """E[i, j] = Gamma_{t_j}(t_i, t_j) and F[i, j] = Gamma_{t_j}(t_j, t_i) for i <= j."""
    n = len(resolvents)
    m = resolvents[0].blocks.shape[-1]
    to_xi = np.full((n, n, m, m), np.nan, dtype=np.complex128)
    from_xi = np.full_like(to_xi, np.nan)
    for r in resolvents:
        j = r.xi_index
        to_xi[: j + 1, j] = r.blocks[:, j]
        from_xi[: j + 1, j] = r.blocks[j, :]
    return to_xi, from_xi


def evolution_residual_from_family(resolvents: list[ResolventTable], h: float) -> float:
    """max ||d/dxi Gamma_xi(t,s) - Gamma_xi(t,xi) Gamma_xi(xi,s)|| over the sampled domain.

    (t_p, t_q) is held fixed and xi runs over nodes j >= max(p, q); pairs with
    fewer than three admissible xi nodes are skipped.
    """
    n = len(resolvents)
    to_xi, from_xi = resolvent_edges(resolvents)
    worst = 0.0
    for r in range(n - 2):
        # all (p, q) with max(p, q) == r: row r (q <= r) then column r (p < r)
        seq = np.stack(
            [np.concatenate([res.blocks[r, : r + 1], res.blocks[:r, r]]) for res in resolvents[r:]]
        )
        ps = np.concatenate([np.full(r + 1, r), np.arange(r)])
        qs = np.concatenate([np.arange(r + 1), np.full(r, r)])
        js = np.arange(r, n)
        lhs = diff_along_xi(seq, h)
        left = to_xi[ps[None, :], js[:, None]]
        right = from_xi[qs[None, :], js[:, None]]
        rhs = np.einsum("jkab,jkbc->jkac", left, right)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def resolvent_evolution_residual(K: KernelTable, resolvents: list[ResolventTable] | None = None) -> float:
    if K.grid.n_nodes < 3:
        raise ValueError("need at least 3 xi nodes")
    resolvents = resolvent_family(K) if resolvents is None else resolvents
    return evolution_residual_from_family(resolvents, K.grid.h)


def solve_via_resolvent(
    K: KernelTable, f: VectorTable, resolvents: list[ResolventTable] | None = None
) -> DirectSolve:
    """Two-step solve through the resolvent family.

    g(t) = f(t) + int_a^t Gamma_t(t, s) f(s) ds, then
    phi(t) = g(t) + int_t^b Gamma_xi(t, xi) g(xi) dxi.
    """
    grid = K.grid
    n = grid.n_nodes
    resolvents = resolvent_family(K) if resolvents is None else resolvents
    fs = f.samples
    g = np.empty_like(fs)
    for i in range(n):
        w = prefix_weights(grid, i).weights
        g[i] = fs[i] + np.einsum("k,kab,kb->a", w, resolvents[i].blocks[i], fs[: i + 1])
    edge, _ = resolvent_edges(resolvents)
    phi = np.empty_like(fs)
    for i in range(n):
        w = suffix_weights(grid, i).weights
        phi[i] = g[i] + np.einsum("k,kab,kb->a", w, edge[i, i:], g[i:])
    res, rel = nystrom_residual(K, phi, fs)
    cond = max(r.condition for r in resolvents)
    return DirectSolve(phi, res, rel, cond, grid)
