"""Chebyshev collocation on [-h, 0] and piecewise Chebyshev interpolants."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.fft import dct


def cheb_lobatto(N):
    """Chebyshev-Gauss-Lobatto points on [-1, 1] in increasing order."""
    if N == 0:
        return np.array([0.0])
    return -np.cos(np.pi * np.arange(N + 1) / N)


def lobatto_bary_weights(N):
    w = (-1.0) ** np.arange(N + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def clenshaw_curtis_weights(N):
    """Clenshaw-Curtis weights on [-1, 1] for the Lobatto points (Trefethen's clencurt)."""
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
    w[ii] = 2.0 * v / N
    return w


def bary_matrix(x, w, t):
    """Matrix E with E @ f(x) = barycentric interpolant evaluated at t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = t[:, None] - x[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = w[None, :] / diff
        E = c / c.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    if rows.any():
        E[rows] = exact[rows].astype(float)
    return E


def diff_matrix(x, w):
    X = x[:, None] - x[None, :]
    np.fill_diagonal(X, 1.0)
    D = (w[None, :] / w[:, None]) / X
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def cheb_coefficients(values):
    """Chebyshev coefficients of data sampled at increasing Lobatto points.

    ``values`` has the node index on axis 0.
    """
    v = np.asarray(values)[::-1]
    N = v.shape[0] - 1
    c = dct(v, type=1, axis=0) / N
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


@dataclass(frozen=True, eq=False)
class Grid:
    """Lobatto grid on [-h, 0] with quadrature and spectral differentiation."""

    h: float
    N: int = 20

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("delay h must be positive")
        if self.N < 4:
            raise ValueError("node_count N must be at least 4")

    @cached_property
    def _ref(self):
        return cheb_lobatto(self.N)

    @cached_property
    def nodes(self):
        x = 0.5 * self.h * (self._ref - 1.0)
        x[0], x[-1] = -self.h, 0.0
        x.setflags(write=False)
        return x

    @cached_property
    def bary_weights(self):
        return lobatto_bary_weights(self.N)

    @cached_property
    def quad_weights(self):
        w = 0.5 * self.h * clenshaw_curtis_weights(self.N)
        w.setflags(write=False)
        return w

    @cached_property
    def diff_matrix(self):
        D = diff_matrix(self.nodes, self.bary_weights)
        D.setflags(write=False)
        return D

    def interp_matrix(self, theta):
        return bary_matrix(self.nodes, self.bary_weights, theta)

    def interpolate(self, values, theta):
        return self.interp_matrix(theta) @ values

    def refined(self, factor=2):
        return Grid(self.h, self.N * factor)

    def same_as(self, other):
        return self.h == other.h and self.N == other.N

    def __repr__(self):
        return f"Grid(h={self.h!r}, N={self.N})"


# ---------------------------------------------------------------------------
# Piecewise Chebyshev representation of functions on an interval
# ---------------------------------------------------------------------------

PANEL_DEGREE = 16


@dataclass(frozen=True, eq=False)
class PiecewiseCheb:
    """Continuous-or-jumping function stored as Lobatto samples per panel.

    ``vals[p, k]`` is the value at the k-th Lobatto point of panel
    ``[breaks[p], breaks[p+1]]``; panel end values are one-sided, so a jump
    at an interior break is represented exactly.
    """

    breaks: np.ndarray
    vals: np.ndarray
    _ref: np.ndarray = field(init=False, repr=False)
    _w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = self.vals.shape[1] - 1
        object.__setattr__(self, "_ref", cheb_lobatto(m))
        object.__setattr__(self, "_w", lobatto_bary_weights(m))

    @classmethod
    def from_sampler(cls, breaks, sampler, degree=PANEL_DEGREE):
        """Build from ``sampler(p, a, b, pts)`` returning values at ``pts`` in panel p."""
        breaks = np.asarray(breaks, dtype=float)
        ref = cheb_lobatto(degree)
        out = []
        for p in range(len(breaks) - 1):
            a, b = breaks[p], breaks[p + 1]
            pts = a + 0.5 * (b - a) * (ref + 1.0)
            pts[0], pts[-1] = a, b
            out.append(np.asarray(sampler(p, a, b, pts)))
        vals = np.stack(out)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        return cls(breaks, vals)

    @classmethod
    def from_function(cls, f, breaks, degree=PANEL_DEGREE):
        return cls.from_sampler(breaks, lambda p, a, b, pts: f(pts), degree)

    @property
    def dim(self):
        return self.vals.shape[2]

    def __call__(self, t, side="right"):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        nb = len(self.breaks)
        idx = np.searchsorted(self.breaks, t, side=side) - 1
        idx = np.clip(idx, 0, nb - 2)
        a = self.breaks[idx]
        b = self.breaks[idx + 1]
        s = 2.0 * (t - a) / (b - a) - 1.0
        diff = s[:, None] - self._ref[None, :]
        exact = np.abs(diff) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self._w[None, :] / diff
            E = c / c.sum(axis=1, keepdims=True)
        rows = exact.any(axis=1)
        if rows.any():
            E[rows] = exact[rows].astype(float)
        return np.einsum("ik,ikn->in", E, self.vals[idx])

    def jumps(self):
        """Size of the one-sided discrepancy at each interior break."""
        if len(self.breaks) <= 2:
            return np.zeros(0)
        d = self.vals[1:, 0, :] - self.vals[:-1, -1, :]
        return np.linalg.norm(d, axis=1)

    def scaled(self, c):
        return PiecewiseCheb(self.breaks, c * self.vals)

    def shifted(self, dt):
        return PiecewiseCheb(self.breaks + dt, self.vals)


def panel_breaks(a, b, interior=(), max_len=None, tol=1e-10):
    """Sorted panel boundaries on [a, b] containing ``interior`` points (near-duplicates merged)."""
    inner = np.sort(np.asarray([p for p in interior if a + tol < p < b - tol], dtype=float))
    pts = [a]
    for p in inner:
        if p - pts[-1] > tol:
            pts.append(p)
    if b - pts[-1] <= tol and len(pts) > 1:
        pts.pop()
    pts = np.asarray(pts + [b])
    if max_len is None:
        return pts
    out = [pts[0]]
    for lo, hi in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil((hi - lo) / max_len - 1e-9)))
        out.extend(lo + (hi - lo) * np.arange(1, k + 1) / k)
    out = np.asarray(out)
    out[-1] = b
    return out


def sample_one_sided(f, pts):
    """Sample f on a panel; a PiecewiseCheb is read from inside the panel at both ends."""
    if isinstance(f, PiecewiseCheb):
        v = f(pts)
        v[-1] = f(pts[-1:], side="left")[0]
        return v
    return np.asarray(f(pts))


def combine_pieces(fs, coefs, a, b, max_len=None, extra=()):
    """sum_i coefs[i] * fs[i] as one PiecewiseCheb on [a, b] with the union of breaks."""
    inner = list(extra)
    for f in fs:
        if isinstance(f, PiecewiseCheb):
            inner.extend(f.breaks[1:-1])
    brk = panel_breaks(a, b, inner, max_len)

    def sampler(p, lo, hi, pts):
        return sum(c * sample_one_sided(f, pts) for f, c in zip(fs, coefs))

    return PiecewiseCheb.from_sampler(brk, sampler)


@lru_cache(maxsize=16)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_panels(breaks, order=20):
    """Nodes and weights of composite Gauss-Legendre rules on consecutive panels."""
    x, w = _leggauss(order)
    breaks = np.asarray(breaks, dtype=float)
    a = breaks[:-1, None]
    b = breaks[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()
