import numpy as np
import pytest
from scipy.special import lambertw

from suncross.errors import SpectralGapViolation
from suncross.grid import Grid
from suncross.spectral import build_decomposition, envelope_slope, find_eigenvalues, projector_checks
from suncross.state import HistorySegment
from suncross.systems import LinearDDE


def test_hayes_critical_pair(hayes_dec):
    crit = sorted((p.lam for p in hayes_dec.center.pairs), key=lambda z: z.imag)
    assert hayes_dec.center.dim == 2 and hayes_dec.unstable.dim == 0
    assert abs(crit[0] - 1j * np.pi / 2) < 1e-8


@pytest.mark.parametrize("a", [-1.0, -0.3, 0.2])
def test_eigenvalues_match_lambert_w(a):
    # x' = a x(t - 1): lam e^{lam} = a, so lam = W_k(a)
    pairs = find_eigenvalues(LinearDDE.scalar(0.0, 1.0, [(1.0, a)]))
    found = np.array([p.lam for p in pairs])
    for k in range(-2, 3):
        w = complex(lambertw(a, k))
        if w.real < found.real.min() - 1e-6:
            continue
        assert np.min(np.abs(found - w)) < 1e-9


def test_eigenvalues_sorted_and_conjugate_closed(mixed_dec):
    lams = np.array([p.lam for p in mixed_dec.eigenpairs])
    for z in lams[np.abs(lams.imag) > 0]:
        assert np.min(np.abs(lams - np.conj(z))) < 1e-10


def test_mixed_system_trichotomy(mixed_dec):
    assert mixed_dec.center.dim == 2 and mixed_dec.unstable.dim == 1
    assert mixed_dec.gamma_minus < 0 < mixed_dec.gamma_plus
    assert mixed_dec.K_eps < 1e3


@pytest.mark.parametrize("name", ["hayes_dec", "mixed_dec"])
def test_projector_identities(name, request):
    dec = request.getfixturevalue(name)
    for c in projector_checks(dec):
        assert c.passed, c.line()


def test_coordinates_are_biorthonormal(mixed_dec):
    g = mixed_dec.grid
    for sub in (mixed_dec.center, mixed_dec.unstable):
        Z = np.array([sub.coords(sub.segment(e, g)) for e in np.eye(sub.dim)])
        assert np.allclose(Z, np.eye(sub.dim), atol=1e-10)


def test_center_component_moves_with_reduced_flow(hayes_dec):
    # P0 T(t) phi = Phi e^{Lambda t} z0
    from suncross.semigroup import perturbed_T

    g = hayes_dec.grid
    phi = HistorySegment.from_function(g, lambda th: (1 + th ** 2)[:, None])
    z0 = hayes_dec.center.coords(phi)
    zt = hayes_dec.center.coords(perturbed_T(hayes_dec.sys, 2.0, phi, rtol=1e-12, atol=1e-14))
    assert np.allclose(zt, hayes_dec.center.flow(2.0) @ z0, atol=1e-8)


def test_gap_violation_is_reported():
    # eigenvalue at 1e-5: inside the default gap
    with pytest.raises(SpectralGapViolation):
        build_decomposition(LinearDDE([[1e-5]], 1.0, ((1.0, [[0.0]]),)), Grid(1.0), constants=False)


def test_envelope_slope_of_exponential():
    t = np.linspace(0, 10, 50)
    assert envelope_slope(t, 3 * np.exp(-0.7 * t) * (1 + 0.2 * np.cos(5 * t) ** 2)) == pytest.approx(-0.7, abs=0.05)


def test_lift_agrees_on_tall_unstable_cluster():
    # unstable pair near 0.30 +- 1.72i: its enclosing ellipse is tall and thin, so the
    # independent contour needs far more than the default trapezoid nodes
    from suncross.spectral import lift_checks

    sys = LinearDDE.scalar(0.0, 1.0, [(1.0, -2.4)], kernel=[0.1, 0.05])
    dec = build_decomposition(sys, seed=0)
    assert dec.unstable.dim == 2
    out = lift_checks(sys, dec, probes=2, seed=0)
    assert out["lifted_ell_vs_characteristic"] < 1e-6
    assert out["lifted_ell_jX_residual"] < 1e-6
