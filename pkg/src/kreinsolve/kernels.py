"""Kernel specifications, sampling onto grids, and the test-kernel catalog.

Internally every kernel is stored as K(t, s) in the convention

    phi(t) - int K(t, s) phi(s) ds = f(t).

Difference kernels are specified by H with K(t, s) = -H(t - s), i.e. the
equation phi(t) + int H(t - s) phi(s) ds = f(t).
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence, Union

import numpy as np

from .errors import KernelError
from .grid import Grid

EVENNESS_RTOL = 1e-10
TOEPLITZ_RTOL = 1e-12

ScalarFn = Union[numbers.Number, Callable[[float], complex]]


@dataclass(frozen=True)
class KernelSpec:
    """A matrix kernel given by an evaluator callback.

    For ``kind == "general"`` the evaluator maps (t, s) to the m x m block
    K(t, s). For ``kind == "difference"`` it maps u to H(u), and the stored
    kernel is K(t, s) = -H(t - s).
    """

    kind: Literal["general", "difference"]
    m: int
    evaluator: Callable = field(compare=False)
    even: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("general", "difference"):
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.m < 1:
            raise KernelError(f"block dimension must be positive; got {self.m}")
        if self.even and self.kind != "difference":
            raise KernelError("only difference kernels can be declared even")

    def block(self, *args) -> np.ndarray:
        value = np.asarray(self.evaluator(*args), dtype=np.complex128)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        if value.shape != (self.m, self.m):
            raise KernelError(
                f"kernel {self.name!r} returned shape {value.shape}, expected {(self.m, self.m)}"
            )
        if not np.all(np.isfinite(value)):
            raise KernelError(f"kernel {self.name!r} returned a non-finite block at {args}")
        return value


@dataclass(frozen=True)
class KernelTable:
    """Dense samples K(t_i, t_j), shape (N, N, m, m)."""

    grid: Grid
    m: int
    blocks: np.ndarray = field(repr=False)
    spec: KernelSpec | None = field(default=None, repr=False, compare=False)

    @property
    def is_difference(self) -> bool:
        return self.spec is not None and self.spec.kind == "difference"

    @property
    def is_even(self) -> bool:
        return self.spec is not None and self.spec.even

    def matrix(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """The blocks on nodes start..stop-1 flattened to a square matrix."""
        stop = self.grid.n_nodes if stop is None else stop
        sub = self.blocks[start:stop, start:stop]
        n = stop - start
        return sub.transpose(0, 2, 1, 3).reshape(n * self.m, n * self.m)

    def norm(self) -> float:
        return float(np.max(np.abs(self.blocks))) if self.blocks.size else 0.0


@dataclass(frozen=True)
class VectorTable:
    """Samples of an m-vector function on a grid, shape (N, m)."""

    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] != self.grid.n_nodes:
            raise KernelError(
                f"vector samples of shape {self.samples.shape} do not match "
                f"a grid of {self.grid.n_nodes} nodes"
            )

    @property
    def m(self) -> int:
        return self.samples.shape[1]


def sample_vector(components: Sequence[ScalarFn] | Callable, grid: Grid) -> VectorTable:
    """Sample a vector function given per component, or as one callable t -> m-vector."""
    if callable(components):
        rows = [np.atleast_1d(np.asarray(components(t), dtype=np.complex128)) for t in grid.nodes]
        samples = np.stack(rows)
    else:
        cols = []
        for comp in components:
            if callable(comp):
                cols.append([complex(comp(t)) for t in grid.nodes])
            else:
                cols.append([complex(comp)] * grid.n_nodes)
        samples = np.array(cols, dtype=np.complex128).T
    if not np.all(np.isfinite(samples)):
        raise KernelError("right-hand side has non-finite samples")
    return VectorTable(grid, samples)


def sample_kernel(spec: KernelSpec, grid: Grid) -> KernelTable:
    n, m = grid.n_nodes, spec.m
    blocks = np.empty((n, n, m, m), dtype=np.complex128)
    if spec.kind == "general":
        for i, t in enumerate(grid.nodes):
            for j, s in enumerate(grid.nodes):
                blocks[i, j] = spec.block(float(t), float(s))
    else:
        # offsets k*h are exact negatives of each other, so the table is
        # block-Toeplitz by construction
        offsets = np.arange(-(n - 1), n) * grid.h
        h_vals = np.stack([spec.block(float(u)) for u in offsets])
        if spec.even:
            check_even(h_vals, spec.name)
        idx = np.subtract.outer(np.arange(n), np.arange(n)) + (n - 1)
        blocks[:] = -h_vals[idx]
    blocks.setflags(write=False)
    return KernelTable(grid, m, blocks, spec)


def check_even(h_vals: np.ndarray, name: str = "H") -> float:
    """Max ||H(u) - H(-u)|| over samples at symmetric offsets; raises if too large."""
    gap = float(np.max(np.abs(h_vals - h_vals[::-1]))) if h_vals.size else 0.0
    scale = float(np.max(np.abs(h_vals))) if h_vals.size else 0.0
    if gap > EVENNESS_RTOL * scale:
        raise KernelError(f"kernel {name!r} declared even but ||H(u) - H(-u)|| = {gap:.3e}")
    return gap


def toeplitz_gap(table: KernelTable) -> float:
    """Largest deviation of the table from block-Toeplitz structure (relative)."""
    b = table.blocks
    n = b.shape[0]
    gap = 0.0
    for k in range(-(n - 1), n):
        diag = np.stack([b[i, i - k] for i in range(max(k, 0), min(n, n + k))])
        gap = max(gap, float(np.max(np.abs(diag - diag[0]))))
    scale = table.norm()
    return gap / scale if scale else gap


def _as_fn(value: ScalarFn) -> Callable[[float], complex]:
    if callable(value):
        return value
    c = complex(value)
    return lambda _u: c


def _zero(m: int = 1) -> KernelSpec:
    zero = np.zeros((m, m), dtype=np.complex128)
    return KernelSpec("difference", m, lambda _u: zero, even=True, name="zero", params={"m": m})


def _constant_scalar(c: complex) -> KernelSpec:
    c = complex(c)
    return KernelSpec("general", 1, lambda t, s: c, name="constant_scalar", params={"c": c})


def _separable_scalar() -> KernelSpec:
    return KernelSpec("general", 1, lambda t, s: t * s, name="separable_scalar")


def _antidiag_block(h1: ScalarFn, h2: ScalarFn) -> KernelSpec:
    f1, f2 = _as_fn(h1), _as_fn(h2)

    def evaluator(u):
        return np.array([[0.0, f1(u)], [f2(u), 0.0]], dtype=np.complex128)

    return KernelSpec(
        "difference", 2, evaluator, even=True, name="antidiag_block", params={"h1": h1, "h2": h2}
    )


def _even_scalar(h: ScalarFn) -> KernelSpec:
    fn = _as_fn(h)
    return KernelSpec("difference", 1, fn, even=True, name="even_scalar", params={"h": h})


CATALOG: dict[str, Callable[..., KernelSpec]] = {
    "zero": _zero,
    "constant_scalar": _constant_scalar,
    "separable_scalar": _separable_scalar,
    "antidiag_block": _antidiag_block,
    "even_scalar": _even_scalar,
}


def catalog(name: str, **params) -> KernelSpec:
    """Look up a named test kernel.

    >>> catalog("constant_scalar", c=0.5).block(0.0, 0.3)
    array([[0.5+0.j]])
    """
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KernelError(f"unknown kernel {name!r}; known: {sorted(CATALOG)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise KernelError(f"bad parameters for kernel {name!r}: {exc}") from None
