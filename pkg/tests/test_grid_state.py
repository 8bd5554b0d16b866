import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suncross.errors import DimensionMismatch, NotInRangeOfJ
from suncross.grid import Grid, PiecewiseCheb, gauss_legendre_panels, panel_breaks
from suncross.state import (HistorySegment, SunDualElement, SunStarElement, embed_j, ell, in_jX_residual, pair,
                            try_inverse_j)


def test_grid_nodes_endpoints_and_order(grid):
    x = grid.nodes
    assert x[0] == -1.0 and x[-1] == 0.0
    assert np.all(np.diff(x) > 0)


@given(st.integers(0, 18))
def test_quadrature_exact_on_monomials(k):
    g = Grid(2.0, 20)
    exact = (0.0 - (-2.0) ** (k + 1)) / (k + 1)
    assert g.quad_weights @ g.nodes ** k == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_spectral_derivative_of_smooth_function(grid):
    th = grid.nodes
    d = grid.diff_matrix @ np.sin(3 * th)
    assert np.max(np.abs(d - 3 * np.cos(3 * th))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=15))
def test_interpolation_reproduces_polynomials(coefs):
    g = Grid(1.5, 16)
    p = np.polynomial.Polynomial(coefs)
    th = np.linspace(-1.5, 0, 37)
    scale = max(1.0, np.max(np.abs(coefs)))
    assert np.max(np.abs(g.interpolate(p(g.nodes), th) - p(th))) < 1e-10 * scale


def test_gauss_legendre_panels_integrate_kink():
    brk = panel_breaks(-1.0, 1.0, (0.3,))
    x, w = gauss_legendre_panels(brk, 10)
    assert w @ np.abs(x - 0.3) == pytest.approx(0.5 * (1.3 ** 2 + 0.7 ** 2), rel=1e-13)


def test_piecewise_cheb_tracks_kink_and_jumps():
    f = lambda t: np.abs(t + 0.4)[:, None]  # noqa: E731
    pc = PiecewiseCheb.from_function(f, panel_breaks(-1.0, 0.0, (-0.4,)))
    t = np.linspace(-1, 0, 101)
    assert np.max(np.abs(pc(t) - f(t))) < 1e-13
    assert np.max(pc.jumps()) < 1e-13


def test_segment_linear_structure(grid):
    a = HistorySegment.from_function(grid, lambda th: np.cos(th)[:, None])
    b = HistorySegment.constant(grid, [2.0])
    th = np.linspace(-1, 0, 9)
    c = 3.0 * a - b
    assert np.allclose(c.evaluate(th)[:, 0], 3 * np.cos(th) - 2)
    assert c.norm() == pytest.approx(1.0)


def test_segment_grid_mismatch(grid):
    a = HistorySegment.zeros(grid, 1)
    with pytest.raises(DimensionMismatch):
        a + HistorySegment.zeros(Grid(1.0, 12), 1)


def test_j_and_ell_membership(grid):
    phi = HistorySegment.from_function(grid, lambda th: np.column_stack([np.sin(th), th ** 2]))
    assert in_jX_residual(embed_j(phi)) < 1e-14
    y = np.array([0.7, -0.2])
    assert in_jX_residual(ell(y, grid)) == pytest.approx(np.linalg.norm(y))
    with pytest.raises(NotInRangeOfJ):
        try_inverse_j(ell(y, grid))
    back = try_inverse_j(embed_j(phi))
    assert np.allclose(back.values, phi.values)


def test_discontinuous_tail_is_rejected(grid):
    # a tail with a jump inside (-h, 0) is weak-star but not in jX
    step = np.where(grid.nodes < -0.5, 1.0, 0.0)[:, None]
    x = SunStarElement(grid, np.array([0.0]), step)
    assert in_jX_residual(x) > 1e-3


def test_pairing_matches_direct_integral(grid):
    # <psi, x> = psi_head x_head + int_0^h g(s) x_tail(-s) ds
    psi = SunDualElement.from_function(grid, [2.0], lambda s: np.exp(-s)[:, None])
    x = embed_j(HistorySegment.from_function(grid, lambda th: (1 + th)[:, None]))
    # int_0^1 e^{-s} (1 - s) ds = e^{-1}
    assert pair(psi, x) == pytest.approx(2.0 * 1.0 + np.exp(-1.0), rel=1e-12)
