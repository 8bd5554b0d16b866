"""Nonlinear semiflow, splitting at an equilibrium and linearization checks."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .errors import EquilibriumViolation
from .grid import Grid
from .integrator import VectorField, integrate
from .semigroup import solve
from .state import HistorySegment
from .systems import LinearDDE, NonlinearDDE, PointNonlinearity

log = logging.getLogger(__name__)

DEFAULT_CEILING = 1e6


def _field(sys: NonlinearDDE):
    return VectorField(sys.base, sys.F)


def semiflow_solution(sys: NonlinearDDE, t_end, phi: HistorySegment, t0=0.0, rtol=1e-10, atol=1e-12,
                      ceiling: Optional[float] = DEFAULT_CEILING):
    """Dense solution of x' = Bx + L_base x_t + F(x_t) from phi at t0.

    Raises MaximalIntervalExceeded with the time at which |x| reaches ``ceiling``.
    """
    scale = max(phi.norm(), 1e-300)
    return integrate(_field(sys), t0, t_end, phi, rtol=rtol, atol=atol * max(scale, 1e-6), ceiling=ceiling)


def semiflow_sigma(sys: NonlinearDDE, t, phi: HistorySegment, **kw) -> HistorySegment:
    """Sigma(t, phi) = x_t."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return phi
    sol = semiflow_solution(sys, t, phi, **kw)
    return sol.segment(t, phi.grid)


def _merge_delays(pairs):
    out = {}
    for tau, A in pairs:
        key = round(float(tau), 14)
        out[key] = out.get(key, 0.0) + np.asarray(A, dtype=float)
    return [(tau, A) for tau, A in sorted(out.items()) if np.any(A != 0)]


def split_G(sys: NonlinearDDE, eq_tol=1e-12):
    """(linearization, remainder) with G = L + R at the zero equilibrium.

    The linearization carries B + DF(0) restricted to phi(0) and the merged
    point delays; the remainder is R(phi) = F(phi) - DF(0) phi.
    """
    F = sys.F
    n = sys.n
    f0 = sys.F_zero()
    if np.max(np.abs(f0)) > eq_tol:
        raise EquilibriumViolation(f"F(0) = {f0.tolist()}")
    V0 = np.zeros((len(F.sigmas), n))
    J = F.jac_at(V0)
    base = sys.base
    B = base.B.copy()
    delays = list(base.delays)
    for s, Jd in zip(F.sigmas, J):
        if s == 0:
            B = B + Jd
        else:
            delays.append((s, Jd))
    lin = LinearDDE(B, base.h, tuple(_merge_delays(delays)), base.kernel)

    g = F.g
    Js = np.asarray(J)

    def gR(V):
        V = np.asarray(V, dtype=float)
        return g(V) - np.einsum("dij,...dj->...i", Js, V)

    def jacR(V):
        return F.jac_at(V) - Js

    R = PointNonlinearity(F.sigmas, gR, jacR, F.name + "-remainder", dict(F.params))
    return lin, R


def _deviation_system(lin: LinearDDE, R: PointNonlinearity):
    """2n system for (z, y) with z' = L z_t and y' = L y_t + R(z_t + y_t)."""
    n = lin.n
    Z = np.zeros((n, n))
    B2 = np.block([[lin.B, Z], [Z, lin.B]])
    delays = tuple((tau, np.block([[A, Z], [Z, A]])) for tau, A in lin.delays)
    kernel = None
    if lin.has_kernel:
        kernel = np.array([np.block([[K, Z], [Z, K]]) for K in lin.kernel])
    big = LinearDDE(B2, lin.h, delays, kernel)
    gR = R.g

    def g2(V):
        V = np.asarray(V, dtype=float)
        out = np.zeros(V.shape[:-2] + (2 * n,))
        out[..., n:] = gR(V[..., :n] + V[..., n:])
        return out

    return big, PointNonlinearity(R.sigmas, g2, None, "deviation")


def linearization_errors(sys: NonlinearDDE, t0=3.0, radii=None, directions=3, seed=0, grid: Optional[Grid] = None,
                         rtol=1e-12):
    """e(r) = max over directions of sup_{t <= t0} ||Sigma(t, r d) - T(t)(r d)||."""
    grid = Grid(sys.h) if grid is None else grid
    radii = np.logspace(-1, -4, 7) if radii is None else np.asarray(radii, dtype=float)
    lin, R = split_G(sys)
    big, g2 = _deviation_system(lin, R)
    field = VectorField(big, g2)
    rng = np.random.default_rng(seed)
    n = sys.n
    dirs = []
    for _ in range(directions):
        c = rng.normal(size=(3, n))
        f = lambda th, c=c: c[0] + np.cos(np.outer(th, [2.0] * n)) * c[1] + np.outer(th, np.ones(n)) * c[2]  # noqa
        seg = HistorySegment.from_function(grid, f)
        dirs.append(seg * (1.0 / seg.norm()))
    errs = np.zeros(len(radii))
    zeros = np.zeros((grid.N + 1, n))
    for i, r in enumerate(radii):
        for d in dirs:
            z0 = d * r
            # history (z, y) = (r d, 0)
            hist = HistorySegment(grid, np.hstack([z0.values, zeros]),
                                  lambda th, z0=z0: np.hstack([z0.evaluate(th), np.zeros((len(np.atleast_1d(th)), n))]))
            sol = integrate(field, 0.0, t0, hist, rtol=rtol, atol=1e-16 * r * r)
            u = np.linspace(0.0, t0, 601)
            errs[i] = max(errs[i], float(np.max(np.linalg.norm(sol(u)[:, n:], axis=1))))
    return radii, errs


def fit_exponent(radii, errs):
    """Least-squares slope of log e against log r."""
    return float(np.polyfit(np.log(radii), np.log(np.maximum(errs, 1e-300)), 1)[0])


def linearization_order_check(sys: NonlinearDDE, t0=3.0, radii=None, **kw):
    """Fitted exponent p in e(r) ~ C r^p (plus the samples)."""
    radii, errs = linearization_errors(sys, t0, radii, **kw)
    if np.all(errs == 0):
        return np.inf, radii, errs
    return fit_exponent(radii, errs), radii, errs


def translation_check(sys: NonlinearDDE, sol, pairs, grid: Grid, rtol=1e-10, atol=1e-12):
    """max ||u(t) - Sigma(t - s, u(s))|| over (t, s) pairs on a computed solution."""
    worst = 0.0
    for t, s in pairs:
        if t < s:
            raise ValueError("pairs must satisfy t >= s")
        if t == s:
            continue
        us = sol.segment(s, grid)
        restart = semiflow_solution(sys, t - s, us, rtol=rtol, atol=atol, ceiling=None)
        th = np.linspace(-sys.h, 0.0, 201)
        worst = max(worst, float(np.max(np.abs(restart(t - s + th) - sol(t + th)))))
    return worst


def formulation_equivalence(sys: NonlinearDDE, phi: HistorySegment, t_end, rtol=1e-10, atol=1e-12):
    """Direct field Bx + F vs the split field Lx + R on the same initial data."""
    lin, R = split_G(sys)
    a = integrate(_field(sys), 0.0, t_end, phi, rtol=rtol, atol=atol)
    b = integrate(VectorField(lin, R), 0.0, t_end, phi, rtol=rtol, atol=atol)
    u = np.linspace(-sys.h, t_end, 1201)
    return float(np.max(np.abs(a(u) - b(u))))


def linear_part_trajectory(sys: NonlinearDDE, phi: HistorySegment, t_end):
    """T(t) phi for the linearization, as a dense solution."""
    lin, _ = split_G(sys)
    return solve(lin, phi, t_end, rtol=1e-10, atol=1e-12)
