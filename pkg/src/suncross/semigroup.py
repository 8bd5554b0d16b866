"""Shift semigroup, perturbed semigroup, weak-star convolutions and resolvents.

Weak-star convolution integrals with forcings in span(jX, lY) are never
formed explicitly.  They are obtained from the inhomogeneous equation they
solve and embedded with ``j``.  Complex data are handled by linearity,
splitting into real and imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConvergenceMargin, NegativeTime, SingularCharacteristicMatrix
from .grid import Grid, PiecewiseCheb, gauss_legendre_panels, panel_breaks
from .integrator import DEFAULT_ATOL, DEFAULT_RTOL, DDESolution, VectorField, integrate
from .state import HistorySegment, SunStarElement, embed_j
from .systems import LinearDDE

COND_LIMIT = 1e13


def _atol(atol, scale):
    return atol * scale if scale > 0 else atol


def _sup_forcing(w, s, t, n=33):
    if t <= s:
        return 0.0
    ts = np.linspace(s, t, n)
    return float(max(np.linalg.norm(np.asarray(w(tt))) for tt in ts))


# ---------------------------------------------------------------------------
# T_0
# ---------------------------------------------------------------------------

def shift_T0(sys: LinearDDE, t, phi: HistorySegment) -> HistorySegment:
    """(T_0(t) phi)(theta) = phi(t + theta) for t + theta <= 0, e^{B(t+theta)} phi(0) otherwise."""
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    if t == 0:
        return phi
    B = sys.B
    c = phi.at_zero()

    def ev(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        u = t + theta
        out = np.empty((len(theta), phi.n), dtype=phi.values.dtype)
        past = u <= 0
        if past.any():
            out[past] = phi.evaluate(u[past])
        if (~past).any():
            E = expm(u[~past][:, None, None] * B[None])
            out[~past] = E @ c
        return out

    bps = [-t] if -t > -sys.h else []
    bps += [b - t for b in phi.breakpoints if b - t > -sys.h]
    return HistorySegment.from_function(phi.grid, ev, tuple(sorted(bps)))


# ---------------------------------------------------------------------------
# T via the method of steps
# ---------------------------------------------------------------------------

def solve(sys: LinearDDE, history, t_end, t0=0.0, forcing=None, forcing_breaks=(), rtol=DEFAULT_RTOL,
          atol=DEFAULT_ATOL, scale=None) -> DDESolution:
    """Real solution of x' = Bx + L x_t + w(t) from ``history`` at t0."""
    if scale is None:
        scale = history.norm() if hasattr(history, "norm") else 1.0
        if forcing is not None:
            scale = max(scale, _sup_forcing(forcing, t0, t_end) * max(1.0, t_end - t0))
    field = VectorField(sys, forcing=forcing, forcing_breaks=tuple(forcing_breaks))
    return integrate(field, t0, t_end, history, rtol=rtol, atol=_atol(atol, scale))


def _is_complex_hist(x):
    if isinstance(x, HistorySegment):
        return x.is_complex
    return np.iscomplexobj(x.head) or np.iscomplexobj(x.tail)


def _part(x, which):
    f = np.real if which == "re" else np.imag
    if isinstance(x, HistorySegment):
        return x.real if which == "re" else x.imag
    tf = x.tail_at
    return SunStarElement(x.grid, f(x.head), f(x.tail), lambda th: f(tf(th)))


def perturbed_T(sys: LinearDDE, t, phi: HistorySegment, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> HistorySegment:
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    if t == 0:
        return phi
    if phi.is_complex:
        re = perturbed_T(sys, t, phi.real, rtol, atol)
        im = perturbed_T(sys, t, phi.imag, rtol, atol)
        return re + im * 1j
    sol = solve(sys, phi, t, rtol=rtol, atol=atol)
    return sol.segment(t, phi.grid)


def T_action(sys: LinearDDE, t, x: SunStarElement, use_perturbed=True, rtol=DEFAULT_RTOL,
             atol=DEFAULT_ATOL) -> SunStarElement:
    """Sun-star semigroup applied to an element of span(jX, lY)."""
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    target = sys if use_perturbed else sys.without_perturbation()
    if _is_complex_hist(x):
        return (T_action(sys, t, _part(x, "re"), use_perturbed, rtol, atol)
                + T_action(sys, t, _part(x, "im"), use_perturbed, rtol, atol) * 1j)
    sol = solve(target, x, t, rtol=rtol, atol=atol, scale=x.norm())
    return sol.state(t, x.grid)


# ---------------------------------------------------------------------------
# weak-star convolutions
# ---------------------------------------------------------------------------

def ws_convolution(sys: LinearDDE, s, t, w: Callable, grid: Grid, use_perturbed=True,
                   forcing_breaks=(), rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> SunStarElement:
    """int_s^t U^{sun-star}(t - tau) l w(tau) dtau, returned as j(x_t).

    ``x`` solves the forced equation with zero history at ``s``; ``U`` is T
    when ``use_perturbed`` and T_0 otherwise.
    """
    if t < s:
        raise NegativeTime(f"t = {t} < s = {s}")
    n = sys.n
    zero = SunStarElement(grid, np.zeros(n), np.zeros((grid.N + 1, n)))
    if t == s:
        return zero
    probe = np.asarray(w(0.5 * (s + t)))
    if np.iscomplexobj(probe):
        re = ws_convolution(sys, s, t, lambda tau: np.real(w(tau)), grid, use_perturbed, forcing_breaks, rtol, atol)
        im = ws_convolution(sys, s, t, lambda tau: np.imag(w(tau)), grid, use_perturbed, forcing_breaks, rtol, atol)
        return re + im * 1j
    sup = _sup_forcing(w, s, t)
    if sup == 0.0:
        return zero
    target = sys if use_perturbed else sys.without_perturbation()
    hist = HistorySegment.zeros(grid, n)
    sol = solve(target, hist, t, t0=s, forcing=w, forcing_breaks=forcing_breaks, rtol=rtol, atol=atol,
                scale=sup * (t - s))
    return sol.state(t, grid)


# ---------------------------------------------------------------------------
# semigroup bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemigroupBound:
    M: float
    omega: float

    def __call__(self, t):
        return self.M * np.exp(self.omega * np.asarray(t))


def spectral_abscissa(sys: LinearDDE, grid: Optional[Grid] = None):
    if sys.is_ode:
        return float(np.max(np.linalg.eigvals(sys.B).real))
    grid = grid or Grid(sys.h, 24)
    ev = np.linalg.eigvals(sys.generator_matrix(grid))
    # spurious pseudospectral roots sit far to the left; the rightmost ones converge fast
    return float(np.max(ev.real))


def _probe_segments(grid, n, rng, count):
    out = [HistorySegment.constant(grid, np.eye(n)[i]) for i in range(n)]
    for _ in range(count):
        c = rng.standard_normal((4, n))
        om = rng.uniform(0.5, 4.0)
        out.append(HistorySegment.from_function(
            grid, lambda th, c=c, om=om: (c[0] + np.outer(np.sin(om * th), c[1]) + np.outer(np.cos(2 * om * th), c[2])
                                          + np.outer(th / grid.h, c[3]))))
    return out


def semigroup_norm_samples(sys: LinearDDE, ts, use_perturbed=True, grid=None, probes=6, seed=0):
    """Empirical ||U(t)|| on a time grid (maximum ratio over probe histories)."""
    ts = np.asarray(ts, dtype=float)
    if not use_perturbed or sys.is_ode:
        # exact: ||T_0(t)|| = sup of ||e^{Bs}|| over the window s in [max(0, t - h), t]
        fine = np.linspace(0.0, ts.max(), 2001) if ts.max() > 0 else np.zeros(1)
        en = np.array([np.linalg.norm(expm(s * sys.B), 2) for s in fine])
        out = []
        for t in ts:
            win = (fine >= t - sys.h - 1e-12) & (fine <= t + 1e-12)
            out.append(max(en[win].max() if win.any() else 1.0, float(np.linalg.norm(expm(t * sys.B), 2))))
        return np.asarray(out)
    grid = grid or Grid(sys.h)
    rng = np.random.default_rng(seed)
    norms = np.zeros(len(ts))
    for phi in _probe_segments(grid, sys.n, rng, probes):
        sol = solve(sys, phi, float(ts.max()))
        vals = sol.node_values(ts, grid)
        norms = np.maximum(norms, np.max(np.linalg.norm(vals, axis=2), axis=1) / phi.norm())
    return norms


def fit_semigroup_bound(sys: LinearDDE, use_perturbed=True, t_max=None, samples=41, margin=0.05,
                        grid=None, seed=0) -> SemigroupBound:
    """Fit ||U(t)|| <= M e^{omega t} on [0, t_max] (default 5h)."""
    t_max = 5 * sys.h if t_max is None else t_max
    target = sys if use_perturbed else sys.without_perturbation()
    omega = spectral_abscissa(target, grid) + margin
    ts = np.linspace(0.0, t_max, samples)
    nrm = semigroup_norm_samples(target, ts, use_perturbed=use_perturbed, grid=grid, seed=seed)
    M = max(1.0, 1.05 * float(np.max(nrm * np.exp(-omega * ts))))
    return SemigroupBound(M, omega)


# ---------------------------------------------------------------------------
# resolvents
# ---------------------------------------------------------------------------

class _Antiderivative:
    """F(u) = int_a^u f(r) dr for a vectorised piecewise-smooth f."""

    def __init__(self, f, a, b, breaks=(), max_len=None, order=20):
        self.f = f
        self.order = order
        self.brk = panel_breaks(a, b, breaks, max_len)
        x, w = gauss_legendre_panels(self.brk, order)
        vals = np.asarray(f(x))
        P = len(self.brk) - 1
        per = (w[:, None] * vals).reshape(P, order, -1).sum(axis=1)
        self.cum = np.concatenate([np.zeros((1, per.shape[1]), dtype=per.dtype), np.cumsum(per, axis=0)])
        self.gx, self.gw = np.polynomial.legendre.leggauss(order)

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        idx = np.clip(np.searchsorted(self.brk, u, side="right") - 1, 0, len(self.brk) - 2)
        lo = self.brk[idx]
        half = 0.5 * (u - lo)
        pts = (lo + half)[:, None] + half[:, None] * self.gx[None, :]
        vals = np.asarray(self.f(pts.ravel())).reshape(len(u), self.order, -1)
        part = np.einsum("k,q,kqn->kn", half, self.gw, vals)
        return self.cum[idx] + part


def _split_input(x: SunStarElement):
    """x = j(phi) + l(y) with phi the tail and y = head - tail(0)."""
    bps = tuple(x.tail_fn.breaks[1:-1]) if isinstance(x.tail_fn, PiecewiseCheb) else ()
    phi = HistorySegment(x.grid, x.tail, x.tail_fn, bps)
    y = x.head - x.tail[-1]
    return phi, y


def laplace_horizon(bound: SemigroupBound, lam, scale, tol, T_cap):
    gap = complex(lam).real - bound.omega
    if gap <= 0:
        raise ConvergenceMargin(f"Re lambda = {complex(lam).real:.4g} does not exceed omega = {bound.omega:.4g}")
    if scale == 0:
        return 0.0
    T = max(0.0, np.log(bound.M * scale / (gap * tol)) / gap)
    if T > T_cap:
        raise ConvergenceMargin(
            f"truncation horizon {T:.3g} exceeds cap {T_cap:.3g}; Re lambda - omega = {gap:.3g} too small")
    return T


def resolvent_laplace(sys: LinearDDE, lam, x: SunStarElement, use_perturbed=True, tol=1e-10,
                      bound: Optional[SemigroupBound] = None, T_max=None, T_cap=None,
                      rtol=1e-10, atol=1e-12) -> SunStarElement:
    """int_0^T e^{-lam tau} U^{sun-star}(tau) x dtau for x in span(jX, lY).

    T is chosen from M e^{-(Re lam - omega) T} ||x|| / (Re lam - omega) <= tol
    unless ``T_max`` is given.
    """
    lam = complex(lam)
    grid = x.grid
    target = sys if use_perturbed else sys.without_perturbation()
    if bound is None:
        bound = fit_semigroup_bound(sys, use_perturbed, grid=None)
    T_cap = 400 * sys.h if T_cap is None else T_cap
    T = laplace_horizon(bound, lam, x.norm(), tol, T_cap) if T_max is None else float(T_max)
    phi, y = _split_input(x)
    n = sys.n
    out = SunStarElement(grid, np.zeros(n, dtype=complex), np.zeros((grid.N + 1, n), dtype=complex))
    if np.linalg.norm(y) > 0:
        w = lambda tau: np.exp(lam * tau) * y  # noqa: E731
        out = out + ws_convolution(sys, -T, 0.0, w, grid, use_perturbed, rtol=rtol, atol=atol)
    if phi.norm() > 0:
        out = out + _laplace_of_orbit(target, lam, phi, T, rtol, atol)
    return out


def _laplace_of_orbit(sys, lam, phi, T, rtol, atol):
    parts = [(phi.real, 1.0), (phi.imag, 1j)] if phi.is_complex else [(phi, 1.0)]
    grid = phi.grid
    h = sys.h
    fns = []
    for seg, c in parts:
        if seg.norm() == 0:
            continue
        sol = solve(sys, seg, T + 1e-300 if T == 0 else T, rtol=rtol, atol=atol)
        F = _Antiderivative(lambda r, sol=sol: np.exp(-lam * r)[:, None] * sol(r), -h, T,
                            sol.all_breaks(), max_len=h / 8)

        def tail(theta, F=F, c=c):
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            return c * np.exp(lam * theta)[:, None] * (F(T + theta) - F(theta))

        fns.append(tail)
    if not fns:
        return SunStarElement(grid, np.zeros(sys.n, dtype=complex), np.zeros((grid.N + 1, sys.n), dtype=complex))

    def tail_fn(theta):
        return sum(f(theta) for f in fns)

    vals = tail_fn(grid.nodes)
    return SunStarElement(grid, vals[-1], vals, tail_fn)


def _require_regular(sys, lam, D):
    # relative to the size of the terms of Delta, so that 1 x 1 matrices are covered too
    scale = abs(lam) + np.linalg.norm(sys.B, 2) + sum(np.linalg.norm(A, 2) * np.exp(-lam.real * tau)
                                                       for tau, A in sys.delays) + 1.0
    if np.linalg.svd(D, compute_uv=False)[-1] < scale / COND_LIMIT:
        raise SingularCharacteristicMatrix(f"Delta({lam}) is singular")


def resolvent_in_X(sys: LinearDDE, lam, phi: HistorySegment) -> HistorySegment:
    """R(lam, A) phi via the variation-of-constants formula on [-h, 0]."""
    lam = complex(lam)
    h = sys.h
    G = _Antiderivative(lambda s: np.exp(-lam * s)[:, None] * phi.evaluate(s), -h, 0.0, phi.breakpoints,
                        max_len=h / 8)
    G0 = G(np.array([0.0]))[0]

    def g(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(lam * theta)[:, None] * (G0[None, :] - G(theta))

    D = sys.char_matrix(lam)
    _require_regular(sys, lam, D)
    c = np.linalg.solve(D, phi.at_zero() + sys.L_apply(g, phi.breakpoints))

    def psi(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(lam * theta)[:, None] * c[None, :] + g(theta)

    return HistorySegment.from_function(phi.grid, psi, phi.breakpoints)


def resolvent_characteristic(sys: LinearDDE, lam, y, grid: Grid) -> SunStarElement:
    """j(e^{lam theta} Delta(lam)^{-1} y): the resolvent applied to l(y)."""
    lam = complex(lam)
    D = sys.char_matrix(lam)
    _require_regular(sys, lam, D)
    c = np.linalg.solve(D, np.asarray(y, dtype=complex))

    def f(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(lam * theta)[:, None] * c[None, :]

    return embed_j(HistorySegment.from_function(grid, f))
