"""Method-of-steps integration of retarded equations with dense output.

The step intervals are aligned with the propagated breakpoints
t0 + tau_i (+ tau_j ...) so that every delayed argument used inside one
interval falls into a single smooth piece (the history or an earlier
interval).  Each interval is solved with DOP853 and its dense output is
kept, which gives x(t) at arbitrary times and segments x_t as piecewise
Chebyshev interpolants.

Distributed kernels K(theta) = sum_m K_m (theta/h)^m are handled exactly
through the moments M_m(t) = int_{t-h}^t ((s - t)/h)^m x(s) ds, which obey

    M_m' = [m == 0] x(t) - (-1)^m x(t - h) - (m / h) M_{m-1}.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegratorFailure, MaximalIntervalExceeded
from .grid import PANEL_DEGREE, Grid, PiecewiseCheb, gauss_legendre_panels, panel_breaks
from .state import HistorySegment, SunStarElement
from .systems import LinearDDE, PointNonlinearity

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class VectorField:
    """Right-hand side B x + L x_t + g(point values) + w(t)."""

    linear: LinearDDE
    nonlin: Optional[PointNonlinearity] = None
    forcing: Optional[Callable] = None
    forcing_breaks: tuple = ()

    @property
    def n(self):
        return self.linear.n

    @property
    def h(self):
        return self.linear.h

    def delays(self):
        d = set(self.linear.delay_values())
        if self.nonlin is not None:
            d |= {s for s in self.nonlin.sigmas if s > 0}
        return sorted(d)


def _history_callable(history):
    """Normalise the history to (evaluate(theta) -> (k, n), breakpoints, head)."""
    if isinstance(history, HistorySegment):
        return history.evaluate, tuple(history.breakpoints), history.values[-1]
    if isinstance(history, SunStarElement):
        ev = history.tail_at
        bps = tuple(history.tail_fn.breaks[1:-1]) if isinstance(history.tail_fn, PiecewiseCheb) else ()
        return ev, bps, history.head
    raise TypeError("history must be a HistorySegment or SunStarElement")


def _breakpoints(t0, t_end, delays, hist_breaks, extra, order=3, cap=2000):
    pts = set()
    if delays:
        for k in range(1, order + 1):
            for combo in itertools.combinations_with_replacement(delays, k):
                s = t0 + sum(combo)
                if s < t_end - _EPS:
                    pts.add(s)
        for b in hist_breaks:
            for tau in delays:
                s = t0 + b + tau
                if t0 + _EPS < s < t_end - _EPS:
                    pts.add(s)
    for s in extra:
        if t0 + _EPS < s < t_end - _EPS:
            pts.add(float(s))
    pts = sorted(pts)
    if len(pts) > cap:
        pts = pts[:cap]
    out = []
    for p in pts:
        if not out or p - out[-1] > 1e-10:
            out.append(p)
    return out


class DDESolution:
    """Dense solution on [t0 - h, t_end]."""

    def __init__(self, field, t0, x0, hist_eval, hist_breaks, h, moments_dim):
        self.field = field
        self.t0 = float(t0)
        self.x0 = np.asarray(x0, dtype=float)
        self.hist_eval = hist_eval
        self.hist_breaks = tuple(hist_breaks)
        self.h = h
        self.n = len(self.x0)
        self._mdim = moments_dim
        self.starts = []
        self.ends = []
        self.sols = []
        self.breaks = []
        self.t_end = self.t0

    # -- pieces ------------------------------------------------------------
    def _append(self, a, b, sol):
        self.starts.append(a)
        self.ends.append(b)
        self.sols.append(sol)
        self.t_end = b

    def _piece_eval(self, u):
        """x at times u >= t0 (array), using the stored pieces."""
        u = np.asarray(u, dtype=float)
        out = np.empty((len(u), self.n))
        if not self.sols:
            out[:] = self.x0
            return out
        idx = np.searchsorted(self.starts, u, side="right") - 1
        idx = np.clip(idx, 0, len(self.sols) - 1)
        for i in np.unique(idx):
            m = idx == i
            uu = np.clip(u[m], self.starts[i], self.ends[i])
            out[m] = self.sols[i](uu)[: self.n].T
        return out

    def __call__(self, u):
        """x(u) with the history for u < t0 and the solution for u >= t0."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty((len(u), self.n))
        left = u < self.t0
        if left.any():
            out[left] = np.real(self.hist_eval(np.minimum(u[left] - self.t0, 0.0)))
        if (~left).any():
            out[~left] = self._piece_eval(u[~left])
        return out

    def all_breaks(self):
        return [self.t0] + list(self.breaks) + [self.t0 + b for b in self.hist_breaks]

    # -- segments ----------------------------------------------------------
    def segment_pieces(self, t, max_len=None):
        """x_t on [-h, 0] as a piecewise Chebyshev interpolant."""
        h = self.h
        max_len = h / 8 if max_len is None else max_len
        interior = [b - t for b in self.all_breaks()]
        brk = panel_breaks(-h, 0.0, interior, max_len=max_len)
        t0 = self.t0

        def sampler(p, a, b, pts):
            mid = 0.5 * (a + b)
            if t + mid < t0:
                return np.real(self.hist_eval(np.minimum(t + pts - t0, 0.0)))
            return self._piece_eval(np.maximum(t + pts, t0))

        return PiecewiseCheb.from_sampler(brk, sampler, PANEL_DEGREE)

    def segment(self, t, grid: Grid) -> HistorySegment:
        return HistorySegment.from_pieces(grid, self.segment_pieces(t))

    def state(self, t, grid: Grid) -> SunStarElement:
        pc = self.segment_pieces(t)
        head = self._piece_eval(np.array([t]))[0] if t >= self.t0 else self.hist_eval(np.array([t - self.t0]))[0]
        return SunStarElement(grid, head, pc(grid.nodes), pc)

    def node_values(self, times, grid: Grid):
        """x(t + theta_k) for every t in ``times``; shape (len(times), N+1, n)."""
        times = np.asarray(times, dtype=float)
        u = (times[:, None] + grid.nodes[None, :]).ravel()
        return self(u).reshape(len(times), grid.N + 1, self.n)


def integrate(field: VectorField, t0, t_end, history, *, x0=None, rtol=DEFAULT_RTOL,
              atol=DEFAULT_ATOL, ceiling=None, max_interval=None) -> DDESolution:
    """Integrate from ``history`` at ``t0`` up to ``t_end``.

    ``history`` is a HistorySegment (continuous initial data) or a
    SunStarElement whose head may differ from tail(0); in that case the
    solution starts from the head and the tail is used as the past.
    """
    t0 = float(t0)
    t_end = float(t_end)
    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    hist_eval, hist_breaks, head = _history_callable(history)
    if x0 is None:
        x0 = head
    x0 = np.asarray(np.real(x0), dtype=float)
    lin = field.linear
    n, h = lin.n, lin.h
    delays = field.delays()
    kernel = lin.kernel if lin.has_kernel else None
    mdeg = 0 if kernel is None else kernel.shape[0]
    sol = DDESolution(field, t0, x0, lambda th: np.real(hist_eval(th)), hist_breaks, h, mdeg * n)
    if t_end == t0:
        return sol

    # initial moments from the history
    y0 = x0
    if kernel is not None:
        brk = panel_breaks(-h, 0.0, hist_breaks, max_len=h / 8)
        xq, wq = gauss_legendre_panels(brk)
        hv = np.real(hist_eval(xq))
        pw = (xq / h)[:, None] ** np.arange(mdeg)[None, :]
        M0 = np.einsum("q,qm,qn->mn", wq, pw, hv)
        y0 = np.concatenate([x0, M0.ravel()])

    breaks = _breakpoints(t0, t_end, delays, hist_breaks, field.forcing_breaks)
    sol.breaks = breaks
    tau_min = min(delays) if delays else np.inf
    if max_interval is not None:
        tau_min = min(tau_min, max_interval)

    B = lin.B
    lin_delays = lin.delays
    nl = field.nonlin
    nl_sig = None if nl is None else np.asarray(nl.sigmas, dtype=float)
    w = field.forcing
    sign = (-1.0) ** np.arange(mdeg)
    mcoef = np.arange(mdeg) / h

    def make_rhs(a, b):
        # lookup rule per delay: past (history) or computed pieces
        use_hist = {tau: (b - tau <= t0 + 1e-10) for tau in delays}

        def lookup(u, tau):
            if use_hist[tau]:
                return np.real(hist_eval(np.array([min(u - t0, 0.0)])))[0]
            u = max(u, t0)
            i = bisect.bisect_right(sol.starts, u) - 1
            if i < 0:
                return x0
            uu = min(u, sol.ends[i])
            return sol.sols[i](uu)[:n]

        def rhs(t, y):
            x = y[:n]
            dx = B @ x
            for tau, A in lin_delays:
                dx = dx + A @ lookup(t - tau, tau)
            if kernel is not None:
                M = y[n:].reshape(mdeg, n)
                dx = dx + np.einsum("mij,mj->i", kernel, M)
                xh = lookup(t - h, h)
                dM = -sign[:, None] * xh[None, :]
                dM[0] += x
                dM[1:] -= mcoef[1:, None] * M[:-1]
            if nl is not None:
                V = np.empty((len(nl_sig), n))
                for k, s in enumerate(nl_sig):
                    V[k] = x if s == 0 else lookup(t - s, s)
                dx = dx + nl.g(V)
            if w is not None:
                dx = dx + np.asarray(w(t), dtype=float).reshape(n)
            if kernel is not None:
                return np.concatenate([dx, dM.ravel()])
            return dx

        return rhs

    events = None
    if ceiling is not None:
        def blow(t, y):
            return ceiling - np.linalg.norm(y[:n])
        blow.terminal = True
        blow.direction = -1
        events = [blow]

    a = t0
    y = y0
    bi = 0
    while a < t_end - _EPS:
        while bi < len(breaks) and breaks[bi] <= a + 1e-10:
            bi += 1
        b = min(a + tau_min, t_end)
        if bi < len(breaks):
            b = min(b, breaks[bi])
        res = solve_ivp(make_rhs(a, b), (a, b), y, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True, events=events)
        if res.status == -1:
            raise IntegratorFailure(res.message)
        if res.status == 1:
            te = float(res.t_events[0][0])
            raise MaximalIntervalExceeded(te, ceiling)
        sol._append(a, b, res.sol)
        y = res.y[:, -1]
        a = b
    return sol
