import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ANTIDIAG, SMOOTH_2X2, observed_orders
from kreinsolve.errors import KernelError
from kreinsolve.grid import make_grid
from kreinsolve.kernels import catalog, sample_kernel, sample_vector
from kreinsolve.krein import build_family, check_condition_37, krein_pipeline
from kreinsolve.nystrom import resolvent_family, solve_full
from kreinsolve.symmetric import (
    build_centered_family,
    centered_grid,
    example_4_1_reduction,
    liouville_check,
    solve_theorem_4_1,
    solve_theorem_4_2,
    symmetric_variant_formula,
    symmetry_check,
)

HALF = catalog("even_scalar", h=0.5)
GAUSS = catalog("even_scalar", h=lambda u: 0.6 * np.exp(-3 * u * u))


def _table(spec, n, a=0.0, b=1.0):
    return sample_kernel(spec, make_grid(a, b, n))


def test_symmetry_constant_kernel_exact():
    K = _table(HALF, 17)
    assert symmetry_check(build_family(K), K) <= 1e-13


@pytest.mark.parametrize("spec", [GAUSS, ANTIDIAG], ids=["gauss", "antidiag"])
def test_symmetry_even_kernels(spec):
    for n in (9, 17, 33):
        K = _table(spec, n)
        assert symmetry_check(build_family(K), K) <= 50 * K.grid.h**2


def test_symmetry_rejects_general_kernel():
    K = _table(SMOOTH_2X2, 9)
    with pytest.raises(KernelError):
        symmetry_check(build_family(K), K)


def test_symmetry_breaks_for_non_even_kernel():
    # the check is not vacuous: a general kernel has a visible gap
    assert symmetry_check(build_family(_table(SMOOTH_2X2, 9))) > 1e-3


@pytest.mark.parametrize("spec", [HALF, GAUSS, ANTIDIAG], ids=["half", "gauss", "antidiag"])
def test_liouville(spec):
    hs, gaps = [], []
    for n in (17, 33, 65):
        K = _table(spec, n)
        rep = liouville_check(build_family(K), resolvent_family(K))
        assert rep.min_abs_det > 0.1
        assert rep.det_star_gap <= 1e-10
        assert rep.max_relative_gap_swapped == pytest.approx(rep.max_relative_gap, rel=1e-6, abs=1e-13)
        hs.append(K.grid.h)
        gaps.append(rep.max_relative_gap)
        assert rep.max_relative_gap <= 50 * K.grid.h**2
    if gaps[-1] > 1e-12:
        assert min(observed_orders(hs, gaps)) >= 1.8


def test_liouville_constant_closed_form():
    # det g(xi, xi) = 1 / (1 + xi / 2) for H == 1/2
    K = _table(HALF, 33)
    rep = liouville_check(build_family(K), resolvent_family(K))
    np.testing.assert_allclose(rep.det_g_diag, 1 / (1 + K.grid.nodes / 2), atol=1e-13)


@pytest.mark.parametrize("eps", [0.05, 0.025])
def test_perturbed_kernel_determinant_bound(eps):
    # continuous perturbation with L1 norm eps on [-1, 1]
    base = lambda u: 0.4 * np.cos(u)
    bump = lambda u: eps * 0.75 * (1 - u * u)
    K0 = _table(catalog("even_scalar", h=base), 33)
    Ke = _table(catalog("even_scalar", h=lambda u: base(u) + bump(u)), 33)
    d0 = liouville_check(build_family(K0), resolvent_family(K0)).det_g_diag
    res_e = resolvent_family(Ke)
    rep = liouville_check(build_family(Ke), res_e)
    sup_tr = max(float(np.max(np.abs(r.blocks))) for r in res_e)
    lower = np.exp(-sup_tr * Ke.grid.nodes)
    assert np.all(np.abs(rep.det_g_diag) >= lower * (1 - 1e-3))
    assert np.max(np.abs(rep.det_g_diag - d0)) <= 2 * eps


def test_theorem_4_1_constant_kernel():
    hs, errs = [], []
    for n in (17, 33, 65):
        g = make_grid(0, 1, n)
        _, _, sol = solve_theorem_4_1(HALF, sample_vector([1.0], g))
        errs.append(float(np.max(np.abs(sol.phi.samples - 2 / 3))))
        hs.append(g.h)
    assert errs[-1] <= 5 * hs[-1] ** 2
    if errs[0] > 1e-12:
        assert min(observed_orders(hs, errs)) >= 1.8


def test_theorem_4_1_antidiag_matches_oracle():
    g = make_grid(0, 1, 65)
    f = sample_vector([1.0, lambda t: t], g)
    _, acc, sol = solve_theorem_4_1(ANTIDIAG, f)
    assert check_condition_37(acc).ok
    ref = solve_full(sample_kernel(ANTIDIAG, g), f).samples
    assert np.max(np.abs(sol.phi.samples - ref)) <= 1e-3


def test_theorem_4_1_rejects_general_kernel():
    with pytest.raises(KernelError):
        solve_theorem_4_1(SMOOTH_2X2, sample_vector([1.0, 1.0], make_grid(0, 1, 9)))


@pytest.mark.parametrize("spec", [HALF, GAUSS, ANTIDIAG, catalog("zero", m=2)], ids=["half", "gauss", "antidiag", "zero"])
def test_condition_holds_for_even_kernels(spec):
    for n in (9, 16, 33):
        acc = krein_pipeline(_table(spec, n), sample_vector([1.0] * spec.m, make_grid(0, 1, n)))[1]
        assert check_condition_37(acc).ok


def test_variant_formula_scalar_agrees():
    K = _table(GAUSS, 33)
    f = sample_vector([np.exp], K.grid)
    fam, acc, sol = krein_pipeline(K, f)
    np.testing.assert_allclose(symmetric_variant_formula(fam, acc, f), sol.phi.samples, atol=1e-12)


def test_variant_formula_block_does_not_converge():
    # for m = 2 with g* != g the variant reading stalls instead of converging
    gaps = []
    for n in (17, 33, 65):
        K = _table(ANTIDIAG, n)
        f = sample_vector([np.exp, np.cos], K.grid)
        fam, acc, _ = krein_pipeline(K, f)
        gaps.append(float(np.max(np.abs(symmetric_variant_formula(fam, acc, f) - solve_full(K, f).samples))))
    # a second-order method would shrink the gap 4x per halving of h
    assert gaps[2] > 0.5 * gaps[1]


def test_centered_grid():
    g = centered_grid(make_grid(2.0, 3.0, 5))
    np.testing.assert_allclose(g.nodes, [-0.5, -0.25, 0, 0.25, 0.5])
    with pytest.raises(KernelError):
        centered_grid(make_grid(0, 1, 4))


def test_centered_family_evenness_and_constant():
    # H == 1/2 on [-xi, xi]: q = 1 / (1 + xi), M = xi / (1 + xi)
    fam = build_centered_family(sample_kernel(HALF, make_grid(-0.5, 0.5, 17)))
    assert fam.evenness_gap <= 1e-13
    np.testing.assert_allclose(fam.diagonal()[:, 0, 0], 1 / (1 + fam.xi), atol=1e-13)
    np.testing.assert_allclose(fam.M[:, 0, 0], fam.xi / (1 + fam.xi), atol=1e-13)
    assert fam.invertible.all()


def test_theorem_4_2_constant_rhs():
    g = make_grid(-0.5, 0.5, 17)
    sol = solve_theorem_4_2(HALF, sample_vector([1.0], g))
    np.testing.assert_allclose(sol.phi.samples, 2 / 3, atol=1e-12)
    assert not sol.needs_oracle_check


def test_theorem_4_2_linear_rhs_converges():
    # phi(t) = t: the odd part is orthogonal to the constant kernel
    hs, errs = [], []
    for n in (17, 33, 65):
        g = make_grid(-0.5, 0.5, n)
        sol = solve_theorem_4_2(HALF, sample_vector([lambda t: t], g), sample_vector([1.0], g))
        errs.append(float(np.max(np.abs(sol.phi.samples[:, 0] - g.nodes))))
        hs.append(g.h)
    assert min(observed_orders(hs, errs)) >= 1.5


def test_theorem_4_2_block_with_q_star_moments():
    hs, errs = [], []
    for n in (17, 33, 65):
        g = make_grid(0, 1, n)
        f = sample_vector([np.exp, np.cos], g)
        sol = solve_theorem_4_2(ANTIDIAG, f, sample_vector([np.exp, lambda t: -np.sin(t)], g))
        assert sol.needs_oracle_check
        errs.append(float(np.max(np.abs(sol.phi.samples - solve_full(sample_kernel(ANTIDIAG, g), f).samples))))
        hs.append(g.h)
    assert min(observed_orders(hs, errs)) >= 1.5


def test_example_4_1_agreement():
    rep = example_4_1_reduction(0.5, 0.5, make_grid(-0.5, 0.5, 17))
    assert rep.max_gap <= 1e-12
    assert rep.det_nonzero
    assert rep.l1_row_bounds == pytest.approx((0.5, 0.5))
    assert rep.l1_full_range == pytest.approx((1.0, 1.0))
    assert not rep.warned


def test_example_4_1_degenerate_h1_zero():
    grid = make_grid(-0.5, 0.5, 17)
    rep = example_4_1_reduction(0.0, 0.3, grid)
    q = rep.q_direct
    c = (grid.n_nodes - 1) // 2
    xi = centered_grid(grid).nodes[c:]
    for k in range(c + 1):
        col = q[c - k : c + k + 1, k]
        np.testing.assert_allclose(col[:, 0, 0], 1, atol=1e-14)
        np.testing.assert_allclose(col[:, 0, 1], 0, atol=1e-14)
        np.testing.assert_allclose(col[:, 1, 1], 1, atol=1e-14)
        # q21(t, xi) = -int_{-xi}^{xi} h2 = -0.6 xi (trapezoid exact on constants)
        np.testing.assert_allclose(col[:, 1, 0], -0.6 * xi[k], atol=1e-14)
    assert rep.max_gap <= 1e-14


def test_example_4_1_warns_on_large_norm():
    with pytest.warns(RuntimeWarning, match="L1"):
        rep = example_4_1_reduction(1.2, 0.1, make_grid(-0.5, 0.5, 9))
    assert rep.warned


@settings(max_examples=15, deadline=None)
@given(a1=st.floats(-0.6, 0.6), a2=st.floats(-0.6, 0.6), w=st.floats(0, 4))
def test_example_4_1_property(a1, a2, w):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = example_4_1_reduction(
            lambda u: a1 * np.cos(w * u), lambda u: a2 * np.exp(-u * u), make_grid(-0.5, 0.5, 9)
        )
    assert rep.max_gap <= 1e-10
    if max(rep.l1_row_bounds) < 1:
        assert rep.det_nonzero
