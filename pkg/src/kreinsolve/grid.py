"""Uniform grids, prefix/suffix quadrature and the xi-derivative stencil.

Every truncation point xi is a grid node, so integrals over [a, xi] are
sums over a grid prefix and integrals over [t, b] are sums over a suffix.
Sample arrays always carry the node index on axis 0; trailing axes hold an
m-vector or an m x m block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .errors import GridError

Rule = Literal["trapezoid", "simpson"]


@dataclass(frozen=True)
class Grid:
    """Uniform partition t_0 = a < ... < t_{N-1} = b."""

    a: float
    b: float
    n_nodes: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_nodes - 1)

    @property
    def length(self) -> float:
        return self.b - self.a

    def __len__(self) -> int:
        return self.n_nodes

    def index_of(self, x: float) -> int:
        """Index of the node equal to ``x`` (to 1e-9 of a step)."""
        j = round((x - self.a) / self.h)
        if j < 0 or j >= self.n_nodes or abs(self.a + j * self.h - x) > 1e-9 * self.h:
            raise GridError(f"{x!r} is not a node of {self}")
        return int(j)

    def shifted(self, offset: float) -> "Grid":
        """Same spacing, translated by ``offset``."""
        return make_grid(self.a + offset, self.b + offset, self.n_nodes)


def make_grid(a: float, b: float, n_nodes: int) -> Grid:
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise GridError(f"endpoints must be finite; got a={a}, b={b}")
    if not b > a:
        raise GridError(f"require b > a; got a={a}, b={b}")
    if int(n_nodes) != n_nodes or n_nodes < 3:
        raise GridError(f"n_nodes must be an integer >= 3; got {n_nodes}")
    n_nodes = int(n_nodes)
    h = (b - a) / (n_nodes - 1)
    nodes = a + h * np.arange(n_nodes, dtype=np.float64)
    nodes[-1] = b
    nodes.setflags(write=False)
    return Grid(a, b, n_nodes, nodes)


@dataclass(frozen=True)
class QuadratureWeights:
    rule: str
    weights: np.ndarray
    fallback: bool = False
    empty: bool = False

    def __len__(self) -> int:
        return len(self.weights)


def segment_weights(h: float, count: int, rule: Rule = "trapezoid") -> QuadratureWeights:
    """Weights for ``count`` consecutive nodes with spacing ``h``.

    A single node is an empty interval: the weight is zero and ``empty`` is set.
    """
    if count < 1:
        raise GridError("need at least one node")
    if count == 1:
        return QuadratureWeights(rule, np.zeros(1), empty=True)
    if rule == "simpson":
        if count % 2 == 1:
            w = np.full(count, 2.0)
            w[1:-1:2] = 4.0
            w[0] = w[-1] = 1.0
            return QuadratureWeights("simpson", w * (h / 3.0))
        fallback = True
    elif rule == "trapezoid":
        fallback = False
    else:
        raise GridError(f"unknown quadrature rule {rule!r}")
    w = np.full(count, h)
    w[0] = w[-1] = 0.5 * h
    return QuadratureWeights("trapezoid", w, fallback=fallback)


def prefix_weights(grid: Grid, j: int, rule: Rule = "trapezoid") -> QuadratureWeights:
    """Weights integrating over [a, t_j] with nodes t_0..t_j.

    ``j = 0`` returns a single zero weight flagged ``empty``. Simpson on a
    prefix with an even node count falls back to the trapezoid rule and sets
    ``fallback``.
    """
    if not 0 <= j < grid.n_nodes:
        raise GridError(f"prefix index {j} outside 0..{grid.n_nodes - 1}")
    return segment_weights(grid.h, j + 1, rule)


def suffix_weights(grid: Grid, i: int, rule: Rule = "trapezoid") -> QuadratureWeights:
    """Weights integrating over [t_i, b] with nodes t_i..t_{N-1}."""
    if not 0 <= i < grid.n_nodes:
        raise GridError(f"suffix index {i} outside 0..{grid.n_nodes - 1}")
    return segment_weights(grid.h, grid.n_nodes - i, rule)


def integrate(samples, w: Union[QuadratureWeights, np.ndarray]) -> np.ndarray:
    """Block-wise sum of w_j * samples[j]."""
    weights = w.weights if isinstance(w, QuadratureWeights) else np.asarray(w)
    samples = np.asarray(samples)
    if samples.shape[0] != weights.shape[0]:
        raise GridError(
            f"length mismatch: {samples.shape[0]} samples, {weights.shape[0]} weights"
        )
    return np.tensordot(weights, samples, axes=(0, 0))


def cumulative_integral(samples, h: float) -> np.ndarray:
    """Trapezoid integrals over [t_0, t_j] for every j (first entry zero)."""
    samples = np.asarray(samples)
    out = np.zeros_like(samples, dtype=np.result_type(samples, np.float64))
    if samples.shape[0] > 1:
        panels = 0.5 * h * (samples[1:] + samples[:-1])
        out[1:] = np.cumsum(panels, axis=0)
    return out


def diff_along_xi(values, step: Union[Grid, float]) -> np.ndarray:
    """Second-order derivative along axis 0 of equally spaced samples.

    Central differences inside, three-point one-sided differences at both
    ends. The result has the input's shape.
    """
    h = step.h if isinstance(step, Grid) else float(step)
    v = np.asarray(values)
    if v.shape[0] < 3:
        raise GridError(f"need at least 3 samples to differentiate; got {v.shape[0]}")
    out = np.empty_like(v, dtype=np.result_type(v, np.float64))
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return out
