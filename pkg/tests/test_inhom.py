import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suncross import scenarios
from suncross.grid import Grid
from suncross.inhom import (fixed_point_residual_T0, head_derivative_residual, solve_inhom_T, solve_inhom_T0)
from suncross.state import HistorySegment
from suncross.systems import LinearDDE


@settings(max_examples=10, deadline=None)
@given(st.floats(-2.0, 1.0), st.floats(-2.0, 2.0))
def test_ode_with_cosine_forcing(b, c):
    # x' = b x + cos t: x_p = (sin t - b cos t) / (1 + b^2)
    g = Grid(1.0, 16)
    sys = LinearDDE([[b]], 1.0)
    w = lambda t: np.cos(np.atleast_1d(t))[:, None]  # noqa: E731
    tr = solve_inhom_T(sys, HistorySegment.constant(g, [c]), w, 3.0, rtol=1e-12, atol=1e-14)
    t = np.linspace(0, 3, 31)
    xp = lambda s: (np.sin(s) - b * np.cos(s)) / (1 + b * b)  # noqa: E731
    exact = (c - xp(0.0)) * np.exp(b * t) + xp(t)
    assert np.max(np.abs(tr(t)[:, 0] - exact)) < 1e-8 * max(1.0, np.max(np.abs(exact)))


@pytest.mark.parametrize("make", [scenarios.scalar_test, scenarios.planar_test, scenarios.kernel_test])
def test_T0_and_T_formulations_agree(make, grid, rng):
    sys = make()
    n = sys.n
    c = rng.standard_normal((2, n))
    phi = HistorySegment.from_function(grid, lambda th: c[0] + np.outer(np.sin(2 * th), c[1]))
    om = rng.uniform(0.5, 2.0)
    w = lambda t: np.outer(np.cos(om * np.atleast_1d(t)), c[1])  # noqa: E731
    a = solve_inhom_T0(sys, phi, w, 5.0)
    b = solve_inhom_T(sys, phi, w, 5.0)
    assert a.sup_distance(b) < 1e-7 * max(1.0, a.sup_norm())


def test_fixed_point_and_head_residuals(grid):
    sys = scenarios.scalar_test()
    phi = HistorySegment.from_function(grid, lambda th: np.exp(th)[:, None])
    w = lambda t: np.sin(np.atleast_1d(t))[:, None]  # noqa: E731
    tr = solve_inhom_T(sys, phi, w, 3.0)
    assert fixed_point_residual_T0(sys, tr, w, [0.5, 1.5, 3.0]) < 1e-7
    assert head_derivative_residual(sys, tr, w, [0.7, 2.2]) < 1e-5


def test_nonpositive_horizon_rejected(grid):
    with pytest.raises(ValueError):
        solve_inhom_T(scenarios.hayes(), HistorySegment.constant(grid, [1.0]), None, 0.0)
