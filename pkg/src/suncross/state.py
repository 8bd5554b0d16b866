"""Discrete elements of X = C([-h,0], R^n) and of its sun-star companions.

A sun-star element is stored as a pair (head, tail): ``head`` in R^n and a
bounded ``tail`` on [-h, 0].  ``j`` maps a history to (phi(0), phi) and
``ell`` maps y to (y, 0).  Sun-dual elements are (head, density) with the
density on [0, h]; the pairing is

    <psi, x> = psi.head . x.head + int_0^h psi.density(s) . x.tail(-s) ds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, NotInRangeOfJ
from .grid import Grid, PiecewiseCheb, cheb_coefficients, combine_pieces

DEFAULT_SMOOTH_TOL = 1e-6


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _as_values(values):
    v = np.asarray(values)
    if v.ndim == 1:
        v = v[:, None]
    if not np.iscomplexobj(v):
        v = v.astype(float)
    return v


@dataclass(frozen=True, eq=False)
class HistorySegment:
    """A sampled element of X.

    ``values[k]`` is the value at ``grid.nodes[k]``.  Between nodes the
    segment is evaluated with ``evaluator`` when one is attached (segments
    produced by the integrator carry their dense output), otherwise by
    barycentric interpolation of the node values.
    """

    grid: Grid
    values: np.ndarray
    evaluator: Optional[Callable] = None
    breakpoints: tuple = ()

    def __post_init__(self):
        v = _as_values(self.values)
        if v.shape[0] != self.grid.N + 1:
            raise DimensionMismatch(f"expected {self.grid.N + 1} node values, got {v.shape[0]}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_function(cls, grid, f, breakpoints=()):
        """Sample a vectorised ``f(theta) -> (k, n)`` and keep it as evaluator."""

        def ev(theta):
            out = np.asarray(f(np.atleast_1d(np.asarray(theta, dtype=float))))
            return out[:, None] if out.ndim == 1 else out

        return cls(grid, ev(grid.nodes), ev, tuple(breakpoints))

    @classmethod
    def from_pieces(cls, grid, pc: PiecewiseCheb):
        return cls(grid, pc(grid.nodes), pc, tuple(pc.breaks[1:-1]))

    @classmethod
    def zeros(cls, grid, n):
        return cls(grid, np.zeros((grid.N + 1, n)))

    @classmethod
    def constant(cls, grid, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls.from_function(grid, lambda th: np.broadcast_to(c, (len(th), len(c))).copy())

    # -- basic properties ---------------------------------------------------
    @property
    def n(self):
        return self.values.shape[1]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def at_zero(self):
        return self.values[-1]

    def norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def evaluate(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.evaluator is not None:
            out = np.asarray(self.evaluator(theta))
            return out[:, None] if out.ndim == 1 else out
        return self.grid.interpolate(self.values, theta)

    def __call__(self, theta):
        return self.evaluate(theta)

    # -- linear structure ---------------------------------------------------
    def _combine(self, other, a, b):
        if not self.grid.same_as(other.grid) or self.n != other.n:
            raise DimensionMismatch("segments live on different grids or dimensions")
        vals = a * self.values + b * other.values
        if self.evaluator is None and other.evaluator is None:
            return HistorySegment(self.grid, vals)
        if isinstance(self.evaluator, PiecewiseCheb) and isinstance(other.evaluator, PiecewiseCheb):
            return HistorySegment.from_pieces(
                self.grid, combine_pieces([self.evaluator, other.evaluator], [a, b], -self.grid.h, 0.0))
        f, g = self.evaluate, other.evaluate
        bps = tuple(sorted(set(self.breakpoints) | set(other.breakpoints)))
        return HistorySegment(self.grid, vals, lambda th: a * f(th) + b * g(th), bps)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        if self.evaluator is None:
            return HistorySegment(self.grid, c * self.values)
        if isinstance(self.evaluator, PiecewiseCheb):
            return HistorySegment.from_pieces(self.grid, self.evaluator.scaled(c))
        f = self.evaluate
        return HistorySegment(self.grid, c * self.values, lambda th: c * f(th), self.breakpoints)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @property
    def real(self):
        if not self.is_complex:
            return self
        f = self.evaluate
        return HistorySegment(self.grid, self.values.real, lambda th: f(th).real, self.breakpoints)

    @property
    def imag(self):
        f = self.evaluate
        return HistorySegment(self.grid, np.imag(self.values), lambda th: np.imag(f(th)), self.breakpoints)


@dataclass(frozen=True, eq=False)
class SunStarElement:
    """(head, tail) representation of an element of X^{sun-star}."""

    grid: Grid
    head: np.ndarray
    tail: np.ndarray
    tail_fn: Optional[Callable] = None

    def __post_init__(self):
        head = np.atleast_1d(np.asarray(self.head))
        tail = _as_values(self.tail)
        if tail.shape != (self.grid.N + 1, head.shape[0]):
            raise DimensionMismatch("tail shape does not match grid and head dimension")
        object.__setattr__(self, "head", _frozen(head))
        object.__setattr__(self, "tail", _frozen(tail))

    @property
    def n(self):
        return self.head.shape[0]

    def norm(self):
        tail = float(np.max(np.linalg.norm(self.tail, axis=1)))
        return max(float(np.linalg.norm(self.head)), tail)

    def tail_at(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.tail_fn is not None:
            out = np.asarray(self.tail_fn(theta))
            return out[:, None] if out.ndim == 1 else out
        return self.grid.interpolate(self.tail, theta)

    def _combine(self, other, a, b):
        if not self.grid.same_as(other.grid) or self.n != other.n:
            raise DimensionMismatch("elements live on different grids or dimensions")
        head = a * self.head + b * other.head
        tail = a * self.tail + b * other.tail
        if self.tail_fn is None and other.tail_fn is None:
            return SunStarElement(self.grid, head, tail)
        fs = [(x.tail_fn, c) for x, c in ((self, a), (other, b)) if x.tail_fn is not None or np.any(x.tail)]
        if all(isinstance(f, PiecewiseCheb) for f, _ in fs):
            if len(fs) == 1:
                return SunStarElement(self.grid, head, tail, fs[0][0].scaled(fs[0][1]))
            pc = combine_pieces([f for f, _ in fs], [c for _, c in fs], -self.grid.h, 0.0)
            return SunStarElement(self.grid, head, tail, pc)
        f, g = self.tail_at, other.tail_at
        return SunStarElement(self.grid, head, tail, lambda th: a * f(th) + b * g(th))

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        f = self.tail_at
        if isinstance(self.tail_fn, PiecewiseCheb):
            fn = self.tail_fn.scaled(c)
        else:
            fn = None if self.tail_fn is None else (lambda th: c * f(th))
        return SunStarElement(self.grid, c * self.head, c * self.tail, fn)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True, eq=False)
class SunDualElement:
    """(head, density) representation of an element of X^{sun}.

    ``density[k]`` holds g(s) at s = -grid.nodes[k], i.e. aligned with the
    grid so that the pairing is a plain Clenshaw-Curtis sum.
    """

    grid: Grid
    head: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        head = np.atleast_1d(np.asarray(self.head))
        dens = _as_values(self.density)
        if dens.shape != (self.grid.N + 1, head.shape[0]):
            raise DimensionMismatch("density shape does not match grid and head dimension")
        object.__setattr__(self, "head", _frozen(head))
        object.__setattr__(self, "density", _frozen(dens))

    @classmethod
    def from_function(cls, grid, head, g):
        """``g(s) -> (k, n)`` is sampled at s = -nodes."""
        return cls(grid, head, np.asarray(g(-grid.nodes)))

    def l1_norm(self):
        return float(np.linalg.norm(self.head)
                     + self.grid.quad_weights @ np.linalg.norm(self.density, axis=1))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def embed_j(phi: HistorySegment) -> SunStarElement:
    return SunStarElement(phi.grid, phi.values[-1], phi.values, phi.evaluator)


def ell(y, grid: Grid) -> SunStarElement:
    y = np.atleast_1d(np.asarray(y))
    return SunStarElement(grid, y, np.zeros((grid.N + 1, y.shape[0]), dtype=y.dtype))


def tail_smoothness_defect(x: SunStarElement, smooth_tol=DEFAULT_SMOOTH_TOL):
    """Numerical discontinuity indicator of the tail.

    Tails with a piecewise Chebyshev evaluator are checked directly for jumps
    at their panel breaks (and for agreement with the stored node values).
    Node-only tails fall back to the relative size of the top 20% of their
    Chebyshev coefficients, counted only when it exceeds ``smooth_tol``.
    """
    if isinstance(x.tail_fn, PiecewiseCheb):
        jumps = x.tail_fn.jumps()
        jump = float(jumps.max()) if jumps.size else 0.0
        consistency = float(np.max(np.abs(x.tail_fn(x.grid.nodes) - x.tail)))
        return jump + consistency
    c = cheb_coefficients(x.tail)
    total = np.linalg.norm(c)
    if total == 0.0:
        return 0.0
    k0 = int(np.ceil(0.8 * x.grid.N))
    rel = float(np.linalg.norm(c[k0:]) / total)
    return rel if rel > smooth_tol else 0.0


def in_jX_residual(x: SunStarElement, smooth_tol=DEFAULT_SMOOTH_TOL) -> float:
    """||head - tail(0)|| plus the tail smoothness defect."""
    mismatch = float(np.linalg.norm(x.head - x.tail[-1]))
    return mismatch + tail_smoothness_defect(x, smooth_tol)


def try_inverse_j(x: SunStarElement, tol=1e-8, smooth_tol=DEFAULT_SMOOTH_TOL) -> HistorySegment:
    r = in_jX_residual(x, smooth_tol)
    if r > tol:
        raise NotInRangeOfJ(r, tol)
    bps = tuple(x.tail_fn.breaks[1:-1]) if isinstance(x.tail_fn, PiecewiseCheb) else ()
    return HistorySegment(x.grid, x.tail, x.tail_fn, bps)


def pair(psi: SunDualElement, x: SunStarElement) -> complex:
    if not psi.grid.same_as(x.grid) or psi.head.shape != x.head.shape:
        raise DimensionMismatch("pairing of incompatible elements")
    val = psi.head @ x.head + psi.grid.quad_weights @ np.sum(psi.density * x.tail, axis=1)
    return val.item() if np.ndim(val) == 0 else val
