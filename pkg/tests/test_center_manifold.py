import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from suncross.center_manifold import (CutoffSpec, K_eta, K_eta_solution_residual, bspline, center_component_at_zero,
                                      cm_map, model_checks, random_forcing, reduced_dynamics, reduced_linear_part,
                                      sample_phi0, spline_coefficients, spline_function, tangency_fit, time_nodes,
                                      weighted_norm_curve, with_delta)


@given(st.floats(-50, 50))
def test_bspline_partition_of_unity(x):
    k = np.arange(np.floor(x) - 3, np.floor(x) + 4)
    assert np.sum(bspline(x - k)) == pytest.approx(1.0, abs=1e-13)


def test_spline_interpolates_samples(rng):
    times = time_nodes(2.0, 0.25)
    F = rng.standard_normal((len(times), 2))
    f, _ = spline_function(times, spline_coefficients(F))
    assert np.allclose(f(times), F, atol=1e-12)


@pytest.mark.parametrize("order", [3, 5, 7])
def test_cutoff_profile(order):
    spec = CutoffSpec(0.3, order)
    s = np.linspace(0, 3, 3001)
    xi = spec.xi(s)
    assert np.all(xi[s <= 1] == 1.0) and np.all(xi[s >= 2] == 0.0)
    assert np.all(np.diff(xi) <= 1e-15)
    assert np.max(-np.diff(xi) / np.diff(s)) == pytest.approx(spec.xi_prime_max, rel=1e-3)
    assert spec.xi_delta(0.3) == 1.0 and spec.xi_delta(0.6) == 0.0


def test_cutoff_rejects_bad_parameters():
    with pytest.raises(ValueError):
        CutoffSpec(0.1, 4)
    with pytest.raises(ValueError):
        CutoffSpec(0.0)


def test_time_nodes_contain_zero():
    t = time_nodes(3.0, 0.4)
    assert 0.0 in t and t[0] == -3.0 and t[-1] == 3.0
    assert np.max(np.diff(t)) <= 0.4 + 1e-12


def test_weighted_norm_curve():
    t = np.array([-1.0, 0.0, 2.0])
    F = np.array([[3.0], [1.0], [4.0]])
    assert weighted_norm_curve(t, F, 0.5) == pytest.approx(max(3 * np.exp(-0.5), 1, 4 * np.exp(-1)))


def test_K_eta_contract(model, rng):
    st_ = model.setup
    k0 = int(np.argmin(np.abs(st_.times)))
    m = int(round(1.0 / st_.dt))
    pairs = [(st_.times[k0 + m], st_.times[k0]), (st_.times[k0], st_.times[k0 - 2 * m])]
    for kind in ("bump", "trig"):
        f = random_forcing(1, st_.eta, rng, kind)
        r = K_eta(st_, f)
        fn = weighted_norm_curve(st_.times, f(st_.times), st_.eta)
        assert K_eta_solution_residual(st_, r, pairs) < 1e-6
        assert center_component_at_zero(st_, r) / fn < 1e-8


def test_model_is_contractive_and_vanishes_at_zero(model):
    assert all(c.passed for c in model_checks(model))
    fresh = dataclasses.replace(model, samples=[], contraction_log=[])
    cm_map(fresh, [np.zeros(2)])
    s = fresh.samples[0]
    assert np.max(np.abs(s["values"])) == 0.0 and s["inside"]


def test_threaded_sampling_is_deterministic(model):
    phis = sample_phi0(model, (0.5,), 3)
    a = cm_map(dataclasses.replace(model, samples=[], contraction_log=[]), phis, threads=1)
    b = cm_map(dataclasses.replace(model, samples=[], contraction_log=[]), phis, threads=3)
    for x, y in zip(a.samples, b.samples):
        assert np.array_equal(x["values"], y["values"])


def test_tangency_and_reduced_frequency(model):
    p, C, rs, errs = tangency_fit(model, fracs=(0.2, 0.1, 0.05))
    assert p >= 1.9
    J, ev = reduced_linear_part(model)
    assert np.max(np.abs(ev.imag)) == pytest.approx(np.pi / 2, abs=1e-6)
    assert np.allclose(reduced_dynamics(model, np.zeros(2)), 0.0)


def test_forced_large_delta_breaks_contraction(model):
    assert with_delta(model, 0.5).tuning.product > 1.0
