import numpy as np
import pytest

from suncross import scenarios
from suncross.admissibility import (ForcingSample, admissibility_report, constant_forcing_check, convolution,
                                    interval_independence_check, suncross_membership)
from suncross.state import HistorySegment, SunStarElement, embed_j, ell, in_jX_residual
from suncross.verify import admissibility_pairs, misdeclared_probe, random_forcing_sample

SYSTEMS = {"scalar": scenarios.scalar_test, "planar": scenarios.planar_test, "kernel": scenarios.kernel_test}


@pytest.mark.parametrize("name", sorted(SYSTEMS))
@pytest.mark.parametrize("kind", ["ell", "j", "mixed"])
def test_random_forcings_are_admissible(name, kind, grid, rng):
    sys = SYSTEMS[name]()
    smp = random_forcing_sample(sys, grid, rng, kind, 4.6)
    rep = admissibility_report(sys, [smp], admissibility_pairs(8), grid)
    assert all(c.passed for c in rep["checks"]), [c.line() for c in rep["checks"]]


def test_scalar_ell_convolution_closed_form(grid):
    # x' = -x + 1 from zero: x(t) = 1 - e^{-t}; the convolution is j(x_t)
    from suncross.systems import LinearDDE

    sys = LinearDDE([[-1.0]], 1.0)
    smp = ForcingSample(0.0, 3.0, y=lambda tau: np.ones((len(np.atleast_1d(tau)), 1)))
    v, _ = convolution(sys, smp, 3.0, 0.0, grid)
    th = grid.nodes
    assert np.allclose(v.tail[:, 0], 1 - np.exp(-(3.0 + th)), atol=1e-9)
    assert in_jX_residual(v) < 1e-9


def test_misdeclared_probe_is_flagged(grid, rng):
    sys = scenarios.scalar_test()
    rep = admissibility_report(sys, [misdeclared_probe(sys, grid, 3.0, rng)], [(1.0, 0.0)], grid)
    assert not rep["checks"][1].passed


def test_constant_forcing_mixed(grid):
    sys = scenarios.planar_test()
    phi = HistorySegment.from_function(grid, lambda th: np.column_stack([np.cos(th), th]))
    x = embed_j(phi) + ell([0.5, -1.0], grid)
    assert constant_forcing_check(sys, x, (0.0, 2.0), grid) < 1e-6


def test_interval_independence(grid, rng):
    sys = scenarios.scalar_test()
    smp = random_forcing_sample(sys, grid, rng, "mixed", 2.0)
    out = interval_independence_check(sys, smp, [(0.5, 1.0), (-1.0, 0.7)], grid)
    assert all(c.passed for c in out["checks"]), [c.line() for c in out["checks"]]


def test_membership_of_resolvent_image(grid):
    sys = scenarios.scalar_test()
    ok, res = suncross_membership(sys, ell([1.0], grid), 1.5)
    assert ok and res < 1e-6


def test_unsmooth_j_declaration_is_detected(grid):
    step = np.where(grid.nodes < -0.5, 1.0, 0.0)[:, None]
    bad = SunStarElement(grid, step[-1], step)
    assert in_jX_residual(bad) > 1e-6
