"""Admissibility probes: weak-star convolutions of representable forcings.

A representable forcing on [s, t] has the form

    f(tau) = l y(tau) + sum_m c_m(tau) j phi_m

with continuous coefficient curves.  The l-part is integrated through the
forced equation (see ``ws_convolution``); the j-part is the Bochner integral
j int_s^t c_m(tau) U(t - tau) phi_m dtau evaluated by panel quadrature along
one dense orbit per phi_m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .checks import Check
from .errors import NotInRangeOfJ
from .grid import Grid, PiecewiseCheb, gauss_legendre_panels, panel_breaks
from .semigroup import T_action, _split_input, resolvent_laplace, solve, ws_convolution
from .state import HistorySegment, SunStarElement, in_jX_residual, try_inverse_j
from .systems import LinearDDE


@dataclass(eq=False)
class ForcingSample:
    """Forcing on [s, t]; ``y(tau) -> (n,)`` and ``c(tau) -> (k, M)`` must be vectorised in tau."""

    s: float
    t: float
    y: Optional[Callable] = None
    c: Optional[Callable] = None
    j_elements: Sequence[SunStarElement] = field(default_factory=list)
    label: str = ""

    def shifted(self, dt, scale=1.0):
        """The same forcing pattern transported to [s', t'] = [dt + scale s, dt + scale t]."""
        y, c = self.y, self.c
        back = lambda tau: (np.asarray(tau) - dt) / scale  # noqa: E731
        return ForcingSample(dt + scale * self.s, dt + scale * self.t,
                             None if y is None else (lambda tau: y(back(tau))),
                             None if c is None else (lambda tau: c(back(tau))),
                             list(self.j_elements), self.label + f"@{dt:+g}x{scale:g}")

    def value(self, tau, grid):
        """f(tau) as a sun-star element."""
        n = self.j_elements[0].n if self.j_elements else len(np.atleast_1d(self.y(np.array([tau]))[0]))
        out = SunStarElement(grid, np.zeros(n), np.zeros((grid.N + 1, n)))
        if self.y is not None:
            yv = np.asarray(self.y(np.array([tau])))[0]
            out = out + SunStarElement(grid, yv, np.zeros((grid.N + 1, n)))
        if self.c is not None:
            cv = np.asarray(self.c(np.array([tau])))[0]
            for cm, x in zip(cv, self.j_elements):
                out = out + x * float(cm)
        return out


class _JOrbits:
    """Dense orbits U(r) phi_m, r in [0, L], shared by every upper limit t <= s + L."""

    def __init__(self, sys, segs, L, use_perturbed, rtol, atol):
        target = sys if use_perturbed else sys.without_perturbation()
        self.sys = sys
        self.sols = [solve(target, phi, L, rtol=rtol, atol=atol) for phi in segs]
        self.brks = sorted({b for sol in self.sols for b in sol.all_breaks()}
                           | {b for phi in segs for b in phi.breakpoints})

    def element(self, coef, s, t, grid):
        """j int_s^t sum_m c_m(tau) U(t - tau) phi_m dtau."""
        h = self.sys.h
        L = t - s
        brks = [b for b in self.brks if b <= L + 1e-12]

        def tail(theta):
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            us, ws, starts = [], [], []
            for th in theta:
                # substitute u = t - tau + theta
                u, wu = gauss_legendre_panels(panel_breaks(th, th + L, brks, max_len=h / 8))
                starts.append(sum(len(x) for x in us))
                us.append(u)
                ws.append(wu)
            u = np.concatenate(us)
            w = np.concatenate(ws)
            tau = t + np.repeat(theta, [len(x) for x in us]) - u
            cu = np.asarray(coef(tau))
            acc = sum(cu[:, m:m + 1] * sol(u) for m, sol in enumerate(self.sols))
            return np.add.reduceat(w[:, None] * acc, starts, axis=0)

        kinks = [b - L for b in brks] + list(brks)
        pc = PiecewiseCheb.from_function(tail, panel_breaks(-h, 0.0, kinks, max_len=h / 8))
        vals = pc(grid.nodes)
        return SunStarElement(grid, vals[-1], vals, pc)


def convolutions(sys: LinearDDE, sample: ForcingSample, s, ts, grid: Grid, use_perturbed=False, rtol=1e-9,
                 atol=1e-12, jx_tol=1e-8):
    """v(t, s, f) for every t in ``ts`` (one solve per component); returns (elements, declared residual)."""
    n = sys.n
    ts = [float(t) for t in ts]
    zero = SunStarElement(grid, np.zeros(n), np.zeros((grid.N + 1, n)))
    outs = [zero for _ in ts]
    t_max = max(ts)
    if t_max <= s:
        return outs, 0.0
    if sample.y is not None:
        y = sample.y
        w = lambda tau: np.asarray(y(np.array([tau])))[0]  # noqa: E731
        sup = max(np.linalg.norm(w(tau)) for tau in np.linspace(s, t_max, 33))
        if sup > 0:
            target = sys if use_perturbed else sys.without_perturbation()
            sol = solve(target, HistorySegment.zeros(grid, n), t_max, t0=s, forcing=w, rtol=rtol, atol=atol,
                        scale=sup * (t_max - s))
            outs = [o + (sol.state(t, grid) if t > s else zero) for o, t in zip(outs, ts)]
    declared = 0.0
    if sample.c is not None and sample.j_elements:
        segs, ell_parts = [], []
        for k, x in enumerate(sample.j_elements):
            declared = max(declared, in_jX_residual(x))
            try:
                segs.append(try_inverse_j(x, jx_tol))
            except NotInRangeOfJ:
                # keep the tail as a segment; the head mismatch acts as an l-forcing
                segs.append(HistorySegment(grid, x.tail, x.tail_fn))
                ell_parts.append((k, x.head - x.tail[-1]))
        orb = _JOrbits(sys, segs, t_max - s, use_perturbed, rtol, atol)
        outs = [o + orb.element(sample.c, s, t, grid) if t > s else o for o, t in zip(outs, ts)]
        for k, y in ell_parts:
            c = sample.c
            for i, t in enumerate(ts):
                if t > s:
                    outs[i] = outs[i] + ws_convolution(
                        sys, s, t, lambda tau, k=k, y=y: float(np.asarray(c(np.array([tau])))[0, k]) * y, grid,
                        use_perturbed, rtol=rtol, atol=atol)
    return outs, declared


def convolution(sys, sample, t, s, grid, use_perturbed=False, **kw):
    outs, declared = convolutions(sys, sample, s, [t], grid, use_perturbed, **kw)
    return outs[0], declared


def admissibility_report(sys: LinearDDE, samples, pairs, grid: Grid, use_perturbed=False, tol=1e-6):
    """in_jX residual of v(t, s, f) over samples and (t, s) pairs (relative to ||f||_inf (t - s))."""
    rows, worst, declared = [], 0.0, 0.0
    for t, s in pairs:
        if t < s:
            raise ValueError("pairs must satisfy t >= s")
    by_s = {}
    for t, s in pairs:
        by_s.setdefault(float(s), []).append(float(t))
    for k, smp in enumerate(samples):
        for s, ts in by_s.items():
            vs, dec = convolutions(sys, smp, s, ts, grid, use_perturbed)
            declared = max(declared, dec)
            for t, v in zip(ts, vs):
                r = in_jX_residual(v)
                worst = max(worst, r)
                rows.append({"sample": smp.label or k, "t": t, "s": s, "residual": r})
    checks = [Check("jX residual of convolutions", worst, tol),
              Check("declared jX forcings lie in jX", declared, tol)]
    return {"checks": checks, "rows": rows, "max_residual": worst}


def constant_forcing_check(sys: LinearDDE, x: SunStarElement, interval, grid: Grid, use_perturbed=False,
                           n_pairs=4, tol=1e-6):
    """Constant forcing tau -> x, decomposed as j(phi) + l(y)."""
    phi, y = _split_input(x)
    sample = ForcingSample(interval[0], interval[1],
                           y=lambda tau: np.broadcast_to(y, (len(np.atleast_1d(tau)), len(y))),
                           c=lambda tau: np.ones((len(np.atleast_1d(tau)), 1)),
                           j_elements=[SunStarElement(grid, phi.values[-1], phi.values, phi.evaluator)],
                           label="constant")
    s0, s1 = interval
    ts = np.linspace(s0, s1, n_pairs + 1)
    pairs = [(ts[i], s0) for i in range(1, n_pairs + 1)] + [(s1, ts[i]) for i in range(1, n_pairs)]
    rep = admissibility_report(sys, [sample], pairs, grid, use_perturbed, tol)
    return rep["max_residual"]


def suncross_membership(sys: LinearDDE, x: SunStarElement, lam, tol=1e-6, bound=None, use_perturbed=False):
    """(member?, residual): in_jX residual of the Laplace resolvent at lam."""
    r = resolvent_laplace(sys, lam, x, use_perturbed=use_perturbed, bound=bound)
    res = in_jX_residual(r) / max(1.0, x.norm())
    return res <= tol, res


def interval_independence_check(sys: LinearDDE, sample: ForcingSample, intervals, grid: Grid,
                                use_perturbed=False, tol=1e-6):
    """Residuals of transported copies and additivity over a split of each interval."""
    out = {"intervals": [], "split": []}
    for dt, scale in intervals:
        smp = sample.shifted(dt, scale)
        s, t = smp.s, smp.t
        mid = 0.5 * (s + t)
        rep = admissibility_report(sys, [smp], [(t, s), (mid, s), (s, s)], grid, use_perturbed, tol)
        out["intervals"].append({"s": s, "t": t, "max_residual": rep["max_residual"]})
        whole, _ = convolution(sys, smp, t, s, grid, use_perturbed)
        first, _ = convolution(sys, smp, mid, s, grid, use_perturbed)
        second, _ = convolution(sys, smp, t, mid, grid, use_perturbed)
        moved = T_action(sys, t - mid, first, use_perturbed=use_perturbed, rtol=1e-10, atol=1e-13)
        diff = whole - (moved + second)
        out["split"].append(diff.norm())
    worst = max(r["max_residual"] for r in out["intervals"])
    out["checks"] = [Check("transported copies stay in jX", worst, tol),
                     Check("additivity over split intervals", max(out["split"]), 1e-8)]
    return out
