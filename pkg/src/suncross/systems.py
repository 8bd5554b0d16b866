"""Linear and nonlinear delay equations with finite-dimensional state.

Linear part::

    x'(t) = B x(t) + sum_j A_j x(t - tau_j) + int_{-h}^0 K(theta) x(t + theta) dtheta

with the distributed kernel stored as a polynomial in theta/h,
``K(theta) = sum_m kernel[m] (theta/h)^m``.  Nonlinear equations add a
point-evaluation nonlinearity ``F(x_t) = g(x(t - sigma_0), ..., x(t - sigma_k))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .grid import Grid, gauss_legendre_panels, panel_breaks

MAX_KERNEL_DEGREE = 10


def _mat(a, n=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if n is not None and a.shape != (n, n):
        raise ConfigError(f"expected a {n}x{n} matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearDDE:
    B: np.ndarray
    h: float
    delays: tuple = ()
    kernel: Optional[np.ndarray] = None

    def __post_init__(self):
        B = _mat(self.B)
        n = B.shape[0]
        if B.shape != (n, n):
            raise ConfigError("B must be square")
        if not self.h > 0:
            raise ConfigError("delay h must be positive")
        delays = []
        for tau, A in self.delays:
            tau = float(tau)
            if not (0.0 < tau <= self.h * (1 + 1e-14)):
                raise ConfigError(f"delay {tau} outside (0, h]")
            delays.append((min(tau, self.h), _mat(A, n)))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "delays", tuple(delays))
        if self.kernel is not None:
            K = np.asarray(self.kernel, dtype=float)
            if K.ndim == 2:
                K = K[None]
            if K.shape[1:] != (n, n):
                raise ConfigError("kernel coefficients must be n x n matrices")
            K.setflags(write=False)
            object.__setattr__(self, "kernel", K)

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def has_kernel(self):
        return self.kernel is not None and np.any(self.kernel != 0)

    @property
    def is_ode(self):
        return not self.delays and not self.has_kernel

    @classmethod
    def scalar(cls, b=0.0, h=1.0, delays=(), kernel=None):
        ds = tuple((tau, [[a]]) for tau, a in delays)
        k = None if kernel is None else np.asarray(kernel, dtype=float).reshape(-1, 1, 1)
        return cls([[b]], h, ds, k)

    @classmethod
    def fit_kernel(cls, theta, samples, h, degree=MAX_KERNEL_DEGREE, tol=1e-10):
        """Least-squares power-basis coefficients of sampled K(theta)."""
        theta = np.asarray(theta, dtype=float)
        S = np.asarray(samples, dtype=float)
        n = S.shape[1]
        V = np.vander(theta / h, degree + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, S.reshape(len(theta), -1), rcond=None)
        resid = np.max(np.abs(V @ coef - S.reshape(len(theta), -1)))
        scale = max(1.0, np.max(np.abs(S)))
        if resid > tol * scale:
            raise ConfigError(
                f"kernel is not polynomial of degree <= {degree} in theta/h (fit residual {resid:.2e})")
        return coef.reshape(degree + 1, n, n)

    def without_perturbation(self):
        """The system defining the shift semigroup T_0 (same B and h, L = 0)."""
        return LinearDDE(self.B, self.h)

    def kernel_at(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.has_kernel:
            return np.zeros((len(theta), self.n, self.n))
        u = theta / self.h
        powers = u[:, None] ** np.arange(self.kernel.shape[0])[None, :]
        return np.einsum("km,mij->kij", powers, self.kernel)

    def L_apply(self, evaluate, breakpoints=()):
        """Apply L to a history given as a vectorised evaluator on [-h, 0]."""
        out = np.zeros(self.n, dtype=complex)
        for tau, A in self.delays:
            out = out + A @ evaluate(np.array([-tau]))[0]
        if self.has_kernel:
            brk = panel_breaks(-self.h, 0.0, breakpoints, max_len=self.h / 8)
            x, w = gauss_legendre_panels(brk)
            vals = evaluate(x)
            out = out + np.einsum("k,kij,kj->i", w, self.kernel_at(x), vals)
        return out if np.iscomplexobj(out) and np.any(out.imag != 0) else out.real

    def L_segment(self, phi):
        return self.L_apply(phi.evaluate, phi.breakpoints)

    def L_row(self, grid: Grid):
        """Matrix of shape (n, (N+1) n) applying L to node values via interpolation."""
        n = self.n
        N1 = grid.N + 1
        M = np.zeros((n, N1, n))
        for tau, A in self.delays:
            e = grid.interp_matrix([-tau])[0]
            M += np.einsum("k,ij->ikj", e, A)
        if self.has_kernel:
            brk = panel_breaks(-self.h, 0.0, [-tau for tau, _ in self.delays], max_len=self.h / 8)
            x, w = gauss_legendre_panels(brk)
            E = grid.interp_matrix(x)
            M += np.einsum("q,qij,qk->ikj", w, self.kernel_at(x), E)
        return M.reshape(n, N1 * n)

    # -- spectral symbols ----------------------------------------------------
    def _kernel_laplace(self, lam, weight_theta=False):
        brk = panel_breaks(-self.h, 0.0, (), max_len=self.h / max(8, int(abs(lam) * self.h / 2) + 1))
        x, w = gauss_legendre_panels(brk)
        ww = w * np.exp(lam * x)
        if weight_theta:
            ww = ww * x
        return np.einsum("q,qij->ij", ww, self.kernel_at(x))

    def char_matrix(self, lam):
        """Delta(lam) = lam I - B - sum_j A_j e^{-lam tau_j} - int K(theta) e^{lam theta} dtheta."""
        lam = complex(lam)
        D = lam * np.eye(self.n) - self.B
        for tau, A in self.delays:
            D = D - A * np.exp(-lam * tau)
        if self.has_kernel:
            D = D - self._kernel_laplace(lam)
        return D

    def char_matrix_derivative(self, lam):
        lam = complex(lam)
        D = np.eye(self.n, dtype=complex)
        for tau, A in self.delays:
            D = D + tau * A * np.exp(-lam * tau)
        if self.has_kernel:
            D = D - self._kernel_laplace(lam, weight_theta=True)
        return D

    def generator_matrix(self, grid: Grid):
        """Pseudospectral generator: differentiation with the theta = 0 rows replaced."""
        n = self.n
        N1 = grid.N + 1
        A = np.kron(grid.diff_matrix, np.eye(n))
        row = self.L_row(grid)
        row[:, (N1 - 1) * n:] += self.B
        A[(N1 - 1) * n:, :] = row
        return A

    def delay_values(self):
        vals = {tau for tau, _ in self.delays}
        if self.has_kernel:
            vals.add(self.h)
        return sorted(vals)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointNonlinearity:
    """F(phi) = g(phi(-sigma_0), ..., phi(-sigma_k)).

    ``g`` maps an array of shape (..., k+1, n) to (..., n).  ``jacobian``, if
    given, maps (k+1, n) to the partial derivatives, shape (k+1, n, n).
    """

    sigmas: tuple
    g: Callable
    jacobian: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def values_of(self, evaluate):
        return evaluate(-np.asarray(self.sigmas, dtype=float))

    def __call__(self, phi):
        return np.asarray(self.g(self.values_of(phi.evaluate)))

    def jac_at(self, V, step=1e-6):
        if self.jacobian is not None:
            return np.asarray(self.jacobian(V))
        return fd_jacobian(self.g, V, step)


def fd_jacobian(g, V, step=1e-6):
    """Five-point central differences of g with respect to each point value."""
    V = np.asarray(V, dtype=float)
    m, n = V.shape
    J = np.zeros((m, n, n))
    scale = max(1.0, float(np.max(np.abs(V))))
    e = step * scale
    for d in range(m):
        for c in range(n):
            dV = np.zeros_like(V)
            dV[d, c] = e
            J[d, :, c] = (-g(V + 2 * dV) + 8 * g(V + dV) - 8 * g(V - dV) + g(V - 2 * dV)) / (12 * e)
    return J


def wright(alpha, tau=1.0):
    """x'(t) = -alpha x(t - tau) (1 + x(t))."""
    alpha = float(alpha)

    def g(V):
        return -alpha * V[..., 1, :] * (1.0 + V[..., 0, :])

    def jac(V):
        n = V.shape[-1]
        return np.stack([np.diag(-alpha * V[1]), np.diag(-alpha * (1.0 + V[0]))]).reshape(2, n, n)

    return PointNonlinearity((0.0, float(tau)), g, jac, "wright", {"alpha": alpha, "tau": float(tau)})


def cubic(tau, A0, A1, C):
    """g = A0 x(t) + A1 x(t - tau) + C(u, u, u) with u = (x(t), x(t - tau)).

    ``C`` has shape (n, 2n, 2n, 2n).
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    C = np.asarray(C, dtype=float)
    n = A0.shape[0]
    if C.shape != (n, 2 * n, 2 * n, 2 * n):
        raise ConfigError("cubic form must have shape (n, 2n, 2n, 2n)")

    def g(V):
        u = np.concatenate([V[..., 0, :], V[..., 1, :]], axis=-1)
        lin = np.einsum("ij,...j->...i", A0, V[..., 0, :]) + np.einsum("ij,...j->...i", A1, V[..., 1, :])
        return lin + np.einsum("iabc,...a,...b,...c->...i", C, u, u, u)

    def jac(V):
        u = np.concatenate([V[0], V[1]])
        Cs = C + C.transpose(0, 2, 1, 3) + C.transpose(0, 3, 2, 1)
        Ju = np.einsum("iabc,b,c->ia", Cs, u, u)
        return np.stack([A0 + Ju[:, :n], A1 + Ju[:, n:]])

    return PointNonlinearity((0.0, float(tau)), g, jac, "cubic",
                             {"tau": float(tau), "A0": A0.tolist(), "A1": A1.tolist(), "C": C.tolist()})


def polynomial(sigmas, terms, n):
    """Sum of monomials in point values.

    ``terms`` is a list of ``(coef, out_index, [(delay_index, component, power), ...])``.
    """
    sigmas = tuple(float(s) for s in sigmas)
    parsed = [(float(c), int(i), [(int(d), int(k), int(p)) for d, k, p in fac]) for c, i, fac in terms]

    def g(V):
        V = np.asarray(V, dtype=float)
        out = np.zeros(V.shape[:-2] + (n,))
        for c, i, fac in parsed:
            mono = np.full(V.shape[:-2], c)
            for d, k, p in fac:
                mono = mono * V[..., d, k] ** p
            out[..., i] += mono
        return out

    def jac(V):
        J = np.zeros((len(sigmas), n, n))
        for c, i, fac in parsed:
            for a, (d, k, p) in enumerate(fac):
                if p == 0:
                    continue
                val = c * p * V[d, k] ** (p - 1)
                for b, (d2, k2, p2) in enumerate(fac):
                    if b != a:
                        val = val * V[d2, k2] ** p2
                J[d, i, k] += val
        return J

    return PointNonlinearity(sigmas, g, jac, "polynomial", {"sigmas": list(sigmas), "terms": terms})


@dataclass(frozen=True, eq=False)
class NonlinearDDE:
    """x'(t) = B x(t) + L_base x_t + F(x_t)."""

    base: LinearDDE
    F: PointNonlinearity
    k: int = 2

    def __post_init__(self):
        if any(s < 0 or s > self.base.h * (1 + 1e-14) for s in self.F.sigmas):
            raise ConfigError("nonlinearity evaluates outside [-h, 0]")
        if self.k < 1:
            raise ConfigError("smoothness order must be >= 1")

    @property
    def n(self):
        return self.base.n

    @property
    def h(self):
        return self.base.h

    def G_values(self, V, Lx=0.0):
        return self.F.g(V) + Lx

    def F_zero(self):
        V = np.zeros((len(self.F.sigmas), self.n))
        return np.asarray(self.F.g(V))
