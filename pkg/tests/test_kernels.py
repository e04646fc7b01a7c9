import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreinsolve.errors import KernelError
from kreinsolve.grid import make_grid
from kreinsolve.kernels import (
    KernelSpec,
    VectorTable,
    catalog,
    sample_kernel,
    sample_vector,
    toeplitz_gap,
)


def test_zero_kernel_table():
    t = sample_kernel(catalog("zero", m=3), make_grid(0, 1, 6))
    assert t.blocks.shape == (6, 6, 3, 3)
    assert not np.any(t.blocks)


def test_constant_difference_kernel_sign():
    t = sample_kernel(catalog("even_scalar", h=0.5), make_grid(0, 1, 5))
    np.testing.assert_array_equal(t.blocks, np.full((5, 5, 1, 1), -0.5))


def test_odd_kernel_declared_even_rejected():
    with pytest.raises(KernelError, match="even"):
        sample_kernel(catalog("even_scalar", h=lambda u: u), make_grid(0, 1, 5))


def test_non_finite_rejected():
    spec = KernelSpec("general", 1, lambda t, s: 1 / (t - s) if t != s else np.inf)
    with pytest.raises(KernelError, match="non-finite"):
        sample_kernel(spec, make_grid(0, 1, 5))


def test_wrong_block_shape_rejected():
    spec = KernelSpec("general", 2, lambda t, s: np.eye(3))
    with pytest.raises(KernelError, match="shape"):
        sample_kernel(spec, make_grid(0, 1, 3))


def test_catalog_entries():
    assert catalog("constant_scalar", c=0.5).block(0.1, 0.9)[0, 0] == 0.5
    assert catalog("constant_scalar", c=0.5).kind == "general"
    assert catalog("separable_scalar").block(0.5, 0.5)[0, 0] == 0.25
    h = catalog("antidiag_block", h1=0.5, h2=0.5)
    assert h.m == 2 and h.kind == "difference"
    np.testing.assert_array_equal(h.block(0.0), [[0, 0.5], [0.5, 0]])
    with pytest.raises(KernelError, match="unknown kernel"):
        catalog("magic")
    with pytest.raises(KernelError, match="bad parameters"):
        catalog("constant_scalar")


def test_general_sampling_is_evaluation_exact():
    spec = KernelSpec("general", 2, lambda t, s: np.array([[np.sin(t * s), t], [s**3, np.exp(t - s)]]))
    g = make_grid(-0.3, 1.7, 7)
    table = sample_kernel(spec, g)
    for i, t in enumerate(g.nodes):
        for j, s in enumerate(g.nodes):
            np.testing.assert_array_equal(table.blocks[i, j], spec.block(float(t), float(s)))


def test_difference_table_is_block_toeplitz():
    table = sample_kernel(catalog("antidiag_block", h1=np.cos, h2=lambda u: np.exp(-u * u)), make_grid(0.2, 1.3, 9))
    assert toeplitz_gap(table) <= 1e-12
    # H(u) = H(-u) survives sampling
    np.testing.assert_array_equal(table.blocks[3, 1], table.blocks[1, 3])


def test_matrix_flattening():
    table = sample_kernel(KernelSpec("general", 2, lambda t, s: np.array([[t, s], [1, 2]])), make_grid(0, 1, 3))
    mat = table.matrix()
    assert mat.shape == (6, 6)
    np.testing.assert_array_equal(mat[2:4, 4:6], table.blocks[1, 2])


def test_vector_sampling():
    g = make_grid(0, 1, 4)
    v = sample_vector([lambda t: t, 2.0], g)
    assert v.samples.shape == (4, 2)
    np.testing.assert_array_equal(v.samples[:, 1], 2.0)
    with pytest.raises(KernelError):
        VectorTable(g, np.zeros((3, 1)))


@settings(max_examples=25, deadline=None)
@given(
    c1=st.floats(-2, 2), c2=st.floats(-2, 2), w=st.floats(0, 5), n=st.integers(3, 15)
)
def test_even_antidiag_passes_evenness(c1, c2, w, n):
    spec = catalog("antidiag_block", h1=lambda u: c1 * np.cos(w * u), h2=lambda u: c2 * np.exp(-u * u))
    table = sample_kernel(spec, make_grid(0, 1, n))
    assert toeplitz_gap(table) <= 1e-12
