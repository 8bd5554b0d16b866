import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suncross import scenarios
from suncross.errors import MaximalIntervalExceeded
from suncross.grid import Grid
from suncross.semiflow import (fit_exponent, formulation_equivalence, linearization_order_check, semiflow_sigma,
                               semiflow_solution, split_G, translation_check)
from suncross.state import HistorySegment
from suncross.systems import LinearDDE, NonlinearDDE, cubic


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(-0.5, 0.5))
def test_wright_first_step_closed_form(alpha, c):
    # constant history c: x' = -alpha c (1 + x) on [0, 1]
    g = Grid(1.0, 16)
    sol = semiflow_solution(scenarios.wright_system(alpha), 1.0, HistorySegment.constant(g, [c]),
                            rtol=1e-12, atol=1e-14)
    t = np.linspace(0, 1, 21)
    exact = (1 + c) * np.exp(-alpha * c * t) - 1
    assert np.max(np.abs(sol(t)[:, 0] - exact)) < 1e-10


def test_split_of_wright_nonlinearity():
    lin, R = split_G(scenarios.wright_system(np.pi / 2))
    assert lin.delays[0][0] == 1.0
    assert lin.delays[0][1][0, 0] == pytest.approx(-np.pi / 2)
    V = np.array([[0.3], [-0.2]])
    # remainder is the quadratic part -alpha x(t) x(t - 1)
    assert R.g(V)[0] == pytest.approx(-np.pi / 2 * 0.3 * -0.2)


def test_formulations_and_translation(grid):
    sys = scenarios.wright_system(1.2)
    phi = HistorySegment.from_function(grid, lambda th: (0.2 * np.cos(th))[:, None])
    assert formulation_equivalence(sys, phi, 6.0) < 1e-9
    sol = semiflow_solution(sys, 6.0, phi)
    assert translation_check(sys, sol, [(4.0, 1.5), (5.5, 3.0)], grid) < 1e-8


def test_semiflow_sigma_at_zero_is_identity(grid):
    phi = HistorySegment.constant(grid, [0.1])
    assert semiflow_sigma(scenarios.wright_system(1.0), 0.0, phi) is phi


def test_linearization_is_second_order():
    p, radii, errs = linearization_order_check(scenarios.wright_system(np.pi / 2), 2.0, np.logspace(-1, -3, 3),
                                               directions=1)
    assert p >= 1.9
    assert fit_exponent(radii, 5 * radii ** 2) == pytest.approx(2.0)


def test_blow_up_is_reported(grid):
    base = LinearDDE([[0.0]], 1.0)
    C = np.zeros((1, 2, 2, 2))
    C[0, 0, 0, 0] = 1.0
    sys = NonlinearDDE(base, cubic(1.0, [[0.0]], [[0.0]], C))
    # x' = x^3 from x = 1 blows up at t = 1/2
    with pytest.raises(MaximalIntervalExceeded) as ei:
        semiflow_solution(sys, 2.0, HistorySegment.constant(grid, [1.0]))
    assert ei.value.escape_time == pytest.approx(0.5, abs=1e-3)
