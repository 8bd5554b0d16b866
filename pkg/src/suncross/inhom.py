"""Linear inhomogeneous equations in the two formulations and Favard diagnostics.

The T_0 formulation treats L as part of the forcing,

    u(t) = T_0(t) phi + j^{-1} int_0^t T_0^{sun-star}(t - tau) [L u(tau) + l w(tau)] dtau,

and the T formulation absorbs it into the semigroup,

    u(t) = T(t) phi + j^{-1} int_0^t T^{sun-star}(t - tau) l w(tau) dtau.

``solve_inhom_T0`` integrates x' = Bx + L x_t + w directly.  ``solve_inhom_T``
assembles the homogeneous orbit and the convolution from separate solves.
``fixed_point_residual_T0`` checks the first identity on a computed solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .grid import Grid
from .semigroup import _sup_forcing, shift_T0, solve, ws_convolution
from .state import HistorySegment, SunStarElement, embed_j
from .systems import LinearDDE


@dataclass(eq=False)
class Trajectory:
    """x on [t0 - h, t_end] given as a sum of dense solutions; u(t) = x_t."""

    parts: list
    t0: float
    t_end: float
    h: float
    grid: Grid
    label: str = ""
    breaks: list = field(default_factory=list)

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return sum(p(u) for p in self.parts)

    def segment(self, t) -> HistorySegment:
        g = self.grid
        ev = lambda th: self(t + np.atleast_1d(th))  # noqa: E731
        bps = tuple(b - t for b in self.breaks if -self.h < b - t < 0)
        return HistorySegment.from_function(g, ev, bps)

    def state(self, t) -> SunStarElement:
        return embed_j(self.segment(t))

    def fine_times(self, m=2001):
        u = np.linspace(self.t0 - self.h, self.t_end, m)
        extra = [b for b in self.breaks if self.t0 - self.h <= b <= self.t_end]
        return np.unique(np.concatenate([u, extra]))

    def sup_distance(self, other: "Trajectory", m=2001):
        """sup_t ||u(t) - v(t)|| = sup_u |x(u) - y(u)| on the common window."""
        u = np.unique(np.concatenate([self.fine_times(m), other.fine_times(m)]))
        return float(np.max(np.linalg.norm(self(u) - other(u), axis=1)))

    def sup_norm(self, m=2001):
        u = self.fine_times(m)
        return float(np.max(np.linalg.norm(self(u), axis=1)))

    def samples(self, times):
        """Rows (t, x(t)) for CSV output."""
        times = np.asarray(times, dtype=float)
        return np.column_stack([times, self(times)])


def _check_times(t_end):
    if not t_end > 0:
        raise ValueError("t_end must be positive")


def solve_inhom_T0(sys: LinearDDE, phi: HistorySegment, w: Optional[Callable], t_end, forcing_breaks=(),
                   rtol=1e-10, atol=1e-12) -> Trajectory:
    """Method-of-steps solution of x' = Bx + L x_t + w(t), x_0 = phi."""
    _check_times(t_end)
    sol = solve(sys, phi, t_end, forcing=w, forcing_breaks=forcing_breaks, rtol=rtol, atol=atol)
    return Trajectory([sol], 0.0, float(t_end), sys.h, phi.grid, "T0", sorted(sol.all_breaks()))


def solve_inhom_T(sys: LinearDDE, phi: HistorySegment, w: Optional[Callable], t_end, forcing_breaks=(),
                  rtol=1e-10, atol=1e-12) -> Trajectory:
    """T(t) phi plus the weak-star convolution of l w against T."""
    _check_times(t_end)
    hom = solve(sys, phi, t_end, rtol=rtol, atol=atol)
    parts = [hom]
    brk = list(hom.all_breaks())
    if w is not None and _sup_forcing(w, 0.0, t_end) > 0:
        n = sys.n
        sup = _sup_forcing(w, 0.0, t_end)
        conv = solve(sys, HistorySegment.zeros(phi.grid, n), t_end, forcing=w, forcing_breaks=forcing_breaks,
                     rtol=rtol, atol=atol, scale=sup * t_end)
        # the convolution orbit is zero before the initial time
        parts.append(lambda u, c=conv: np.where((u >= 0)[:, None], c(np.maximum(u, 0.0)), 0.0))
        brk += conv.all_breaks()
    return Trajectory(parts, 0.0, float(t_end), sys.h, phi.grid, "T", sorted(set(brk)))


def fixed_point_residual_T0(sys: LinearDDE, traj: Trajectory, w: Optional[Callable], times, rtol=1e-10,
                            atol=1e-12):
    """max_t ||u(t) - T_0(t) phi - j^{-1} int_0^t T_0(t - tau)[L u(tau) + w(tau)] dtau||.

    The integrand is an l-forcing, so the convolution is the solution of
    x' = Bx + g(t) with g(t) = L x_t + w(t) from zero history.
    """
    grid = traj.grid
    phi = traj.segment(0.0)

    def g(t):
        seg = lambda th: traj(t + np.atleast_1d(th))  # noqa: E731
        bps = [b - t for b in traj.breaks if -sys.h < b - t < 0]
        val = sys.L_apply(seg, bps)
        if w is not None:
            val = val + np.asarray(w(t), dtype=float)
        return val

    worst = 0.0
    for t in times:
        if t <= 0:
            continue
        base = shift_T0(sys, t, phi)
        conv = ws_convolution(sys, 0.0, t, g, grid, use_perturbed=False, forcing_breaks=traj.breaks,
                              rtol=rtol, atol=atol)
        th = np.linspace(-sys.h, 0.0, 201)
        pred = base(th) + conv.tail_at(th)
        worst = max(worst, float(np.max(np.abs(pred - traj(t + th)))))
    return worst


def head_derivative_residual(sys: LinearDDE, traj: Trajectory, w: Optional[Callable], times, dt=1e-4):
    """|central difference of x at t - (B x(t) + L x_t + w(t))|, max over ``times``."""
    worst = 0.0
    for t in times:
        d = (traj(t + dt) - traj(t - dt))[0] / (2 * dt)
        seg = lambda th, t=t: traj(t + np.atleast_1d(th))  # noqa: E731
        rhs = sys.B @ traj(t)[0] + sys.L_apply(seg, [b - t for b in traj.breaks if -sys.h < b - t < 0])
        if w is not None:
            rhs = rhs + np.asarray(w(t), dtype=float)
        worst = max(worst, float(np.max(np.abs(d - rhs))))
    return worst


@dataclass
class FavardEstimate:
    hs: np.ndarray
    quotients: np.ndarray
    slope: float
    bounded: bool

    @property
    def estimate(self):
        return float(np.max(self.quotients))


def favard_diagnostic(sys: LinearDDE, phi: HistorySegment, h_min=1e-6, h_max=None, slope_tol=-0.25,
                      fine=4001) -> FavardEstimate:
    """Dyadic difference quotients (1/h_k)||T_0(h_k) phi - phi||.

    The verdict uses the log-log slope over the finest half of the sequence:
    bounded quotients have slope near 0, a blow-up like h^{-1/2} gives -1/2.
    """
    H = sys.h
    h_max = H / 8 if h_max is None else h_max
    K = max(4, int(np.floor(np.log2(h_max / h_min))) + 1)
    hs = h_max / 2.0 ** np.arange(K)
    th = np.linspace(-H, 0.0, fine)
    q = np.empty(K)
    B = sys.B
    c = phi.at_zero()
    for i, hk in enumerate(hs):
        # the sup is attained near the boundary for rough data; resolve [-4h_k, 0] finely
        tk = np.unique(np.concatenate([th, -hk * np.linspace(0, 4, 401)]))
        tk = tk[tk >= -H]
        u = tk + hk
        shifted = np.empty((len(tk), phi.n))
        past = u <= 0
        shifted[past] = np.real(phi.evaluate(u[past]))
        for k in np.nonzero(~past)[0]:
            shifted[k] = expm(u[k] * B) @ c
        diff = shifted - np.real(phi.evaluate(tk))
        q[i] = float(np.max(np.linalg.norm(diff, axis=1))) / hk
    tail = max(3, K // 2)
    x = np.log(hs[-tail:])
    y = np.log(np.maximum(q[-tail:], 1e-300))
    slope = float(np.polyfit(x, y, 1)[0]) if np.ptp(y) > 1e-12 else 0.0
    # slope is d log q / d log h: growth as h shrinks means a negative slope
    return FavardEstimate(hs, q, slope, bool(slope > slope_tol))


def continuity_constant(sys: LinearDDE, phi: HistorySegment, w: Callable, dphi: HistorySegment, dw: Callable,
                        t_end, eps=(1e-2, 1e-3, 1e-4)):
    """Largest ||u(phi + e dphi, w + e dw) - u(phi, w)||/e over ``eps``."""
    base = solve_inhom_T0(sys, phi, w, t_end)
    out = 0.0
    for e in eps:
        pert = solve_inhom_T0(sys, phi + dphi * e, lambda t, e=e: np.asarray(w(t)) + e * np.asarray(dw(t)), t_end)
        out = max(out, pert.sup_distance(base) / e)
    return out
