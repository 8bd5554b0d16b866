import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from suncross import scenarios
from suncross.errors import NegativeTime, SingularCharacteristicMatrix
from suncross.grid import Grid
from suncross.semigroup import (T_action, fit_semigroup_bound, perturbed_T, resolvent_characteristic, resolvent_in_X,
                                resolvent_laplace, shift_T0, solve)
from suncross.state import HistorySegment, ell
from suncross.systems import LinearDDE

A = np.pi / 2


def hayes_steps(t):
    """Method-of-steps solution of x' = -(pi/2) x(t - 1) with x = 1 on [-1, 0], t in [0, 2]."""
    t = np.asarray(t)
    first = 1 - A * t
    u = t - 1
    second = (1 - A) - A * (u - A * u ** 2 / 2)
    return np.where(t <= 1, first, second)


def test_method_of_steps_against_closed_form(grid):
    sol = solve(scenarios.hayes(), HistorySegment.constant(grid, [1.0]), 2.0, rtol=1e-12, atol=1e-14)
    t = np.linspace(0, 2, 41)
    assert np.max(np.abs(sol(t)[:, 0] - hayes_steps(t))) < 1e-11


def test_ode_case_is_matrix_exponential(grid):
    B = np.array([[0.0, 1.0], [-2.0, -0.3]])
    sys = LinearDDE(B, 1.0)
    c = np.array([1.0, -0.5])
    sol = solve(sys, HistorySegment.constant(grid, c), 3.0, rtol=1e-12, atol=1e-14)
    assert np.allclose(sol(np.array([3.0]))[0], expm(3 * B) @ c, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2.5))
def test_shift_semigroup_formula(t):
    g = Grid(1.0, 20)
    sys = LinearDDE([[-0.4]], 1.0)
    phi = HistorySegment.from_function(g, lambda th: np.cos(2 * th)[:, None])
    out = shift_T0(sys, t, phi)
    th = np.linspace(-1, 0, 23)
    u = t + th
    expect = np.where(u <= 0, np.cos(2 * np.minimum(u, 0)), np.exp(-0.4 * np.maximum(u, 0)))
    assert np.max(np.abs(out.evaluate(th)[:, 0] - expect)) < 1e-12


def test_negative_time_rejected(grid):
    phi = HistorySegment.constant(grid, [1.0])
    with pytest.raises(NegativeTime):
        shift_T0(scenarios.hayes(), -0.1, phi)
    with pytest.raises(NegativeTime):
        perturbed_T(scenarios.hayes(), -0.1, phi)


def test_semigroup_property(grid):
    sys = scenarios.scalar_test()
    phi = HistorySegment.from_function(grid, lambda th: (1 + np.sin(3 * th))[:, None])
    direct = perturbed_T(sys, 2.3, phi, rtol=1e-12, atol=1e-14)
    twostep = perturbed_T(sys, 1.1, perturbed_T(sys, 1.2, phi, rtol=1e-12, atol=1e-14), rtol=1e-12, atol=1e-14)
    th = np.linspace(-1, 0, 31)
    assert np.max(np.abs(direct.evaluate(th) - twostep.evaluate(th))) < 1e-9


def test_sun_star_action_on_ell_lands_in_jX(grid):
    x = T_action(scenarios.planar_test(), 1.5, ell([1.0, 0.0], grid))
    assert abs(x.head - x.tail[-1]).max() < 1e-12


def test_growth_bound_dominates_samples(grid):
    sys = scenarios.scalar_test()
    bd = fit_semigroup_bound(sys)
    phi = HistorySegment.from_function(grid, lambda th: np.exp(th)[:, None])
    for t in (0.5, 2.0, 4.0):
        assert perturbed_T(sys, t, phi).norm() <= bd(t) * phi.norm()


def test_resolvent_solves_generator_equation(grid):
    # psi = R(lam, A) phi satisfies psi' = lam psi - phi and Delta-type boundary relation at 0
    sys = scenarios.scalar_test()
    lam = 1.3 + 0.4j
    phi = HistorySegment.from_function(grid, lambda th: (np.cos(th) + th)[:, None])
    psi = resolvent_in_X(sys, lam, phi)
    g = Grid(1.0, 40)
    vals = psi.evaluate(g.nodes)
    d = g.diff_matrix @ vals
    interior = d[:-1] - (lam * vals[:-1] - phi.evaluate(g.nodes)[:-1])
    assert np.max(np.abs(interior)) < 1e-9
    Lpsi = sys.L_apply(psi.evaluate)
    boundary = lam * vals[-1] - sys.B @ vals[-1] - Lpsi - phi.at_zero()
    assert np.max(np.abs(boundary)) < 1e-10


def test_characteristic_vs_laplace_resolvent(grid):
    sys = scenarios.planar_test()
    lam = 2.0 + 0.5j
    y = np.array([0.3, -1.0])
    a = resolvent_characteristic(sys, lam, y, grid)
    b = resolvent_laplace(sys, lam, ell(y, grid))
    assert (a - b).norm() < 1e-7


def test_resolvent_at_eigenvalue_is_singular(grid):
    with pytest.raises(SingularCharacteristicMatrix):
        resolvent_characteristic(scenarios.hayes(), 1j * A, [1.0], grid)
