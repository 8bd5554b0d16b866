"""Local center manifold by the Lyapunov-Perron fixed point in a weighted space.

Notation: the linearization splits X = X_- + X_0 + X_+ with real bases
Phi_0, Phi_+ and coordinate heads W_0, W_+ (so the center part of l(y) is
Phi_0 W_0 y).  For a forcing curve f (entering as l f) the operator K_eta is

    (K f)(t) = Phi_0 z_0(t) + Phi_+ z_+(t) + I_-(t),
    z_0' = Lambda_0 z_0 + W_0 f,  z_0(0) = 0,
    z_+' = Lambda_+ z_+ + W_+ f,  z_+(T) = 0,
    I_-(t) = P_- x_t,  x' = Bx + L x_t + f(t),  x = 0 on [-T - h, -T].

The stable part is computed on windows: each window starts from the stable
projection of the previous end state so that center and unstable noise is
removed before it can grow.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.interpolate import BSpline, CubicSpline
from scipy.linalg import expm, solve_banded

from .checks import Check
from .errors import ContractionFailure, EtaOutOfRange, LeftDeltaBall, NotConverged, TruncationTooCoarse
from .grid import Grid, PiecewiseCheb, cheb_lobatto, panel_breaks
from .semigroup import solve
from .semiflow import semiflow_solution, split_G
from .spectral import SpectralDecomposition
from .state import HistorySegment
from .systems import LinearDDE, NonlinearDDE, PointNonlinearity

log = logging.getLogger(__name__)

DENSE_DEGREE = 12


# ---------------------------------------------------------------------------
# weighted trajectories
# ---------------------------------------------------------------------------

def time_nodes(T, dt):
    """Uniform nodes on [-T, T] containing 0, with step <= dt."""
    m = int(np.ceil(T / dt - 1e-12))
    return np.linspace(-T, T, 2 * m + 1)


@dataclass(eq=False)
class WeightedTrajectory:
    """Node values u(t_m)(theta_k), shape (M, N+1, n), on uniform t_m in [-T, T]."""

    eta: float
    T: float
    times: np.ndarray
    values: np.ndarray
    grid: Grid
    dense: Optional[Callable] = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def pointwise_norms(self):
        return np.max(np.linalg.norm(self.values, axis=2), axis=1)

    def norm(self):
        return float(np.max(np.exp(-self.eta * np.abs(self.times)) * self.pointwise_norms()))

    def at(self, t):
        """u(t) at the theta nodes, by cubic interpolation in time."""
        return CubicSpline(self.times, self.values, axis=0)(t)

    def segment(self, t) -> HistorySegment:
        if self.dense is not None:
            return self.dense(t)
        return HistorySegment(self.grid, self.at(t))

    def index_of(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def __sub__(self, other):
        return WeightedTrajectory(self.eta, self.T, self.times, self.values - other.values, self.grid)


def weighted_norm_curve(times, F, eta):
    """||f||_eta for samples F of shape (M, n)."""
    return float(np.max(np.exp(-eta * np.abs(times)) * np.linalg.norm(F, axis=1)))


# ---------------------------------------------------------------------------
# cut-off
# ---------------------------------------------------------------------------

_SMOOTHSTEP = {
    3: (np.array([0, 0, 3, -2]), 1.5),
    5: (np.array([0, 0, 0, 10, -15, 6]), 1.875),
    7: (np.array([0, 0, 0, 0, 35, -84, 70, -20]), 2.1875),
}


@dataclass
class CutoffSpec:
    """xi = 1 on [0, 1], 0 on [2, inf), smoothstep in between."""

    delta: float
    order: int = 5
    L_curve: Optional[Callable] = None

    def __post_init__(self):
        if self.order not in _SMOOTHSTEP:
            raise ValueError(f"smoothstep order must be one of {sorted(_SMOOTHSTEP)}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def xi(self, s):
        x = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
        return 1.0 - np.polynomial.polynomial.polyval(x, _SMOOTHSTEP[self.order][0])

    @property
    def xi_prime_max(self):
        return _SMOOTHSTEP[self.order][1]

    def xi_delta(self, r):
        return self.xi(np.asarray(r) / self.delta)


class Remainder:
    """R and R_delta on sampled segments, vectorised over time.

    Samples are node values, optionally followed by values at extra theta
    points (``theta_all``); point evaluations -sigma are read exactly when
    they are sample points and interpolated from the nodes otherwise.
    """

    def __init__(self, R: PointNonlinearity, dec: SpectralDecomposition, grid: Grid, theta_all=None):
        self.R = R
        self.dec = dec
        self.grid = grid
        N1 = grid.N + 1
        pts = -np.asarray(R.sigmas, dtype=float)
        theta_all = grid.nodes if theta_all is None else np.asarray(theta_all, dtype=float)
        E = np.zeros((len(pts), len(theta_all)))
        for d, p in enumerate(pts):
            hit = np.nonzero(np.abs(theta_all - p) < 1e-14)[0]
            if len(hit):
                E[d, hit[0]] = 1.0
            else:
                E[d, :N1] = grid.interp_matrix(np.array([p]))[0]
        self.E = E
        self.N1 = N1
        self.P0 = self._node_projector(dec, grid)

    @staticmethod
    def _node_projector(dec, grid):
        if dec.center.dim == 0:
            return np.zeros(((grid.N + 1) * dec.sys.n,) * 2)
        if grid.same_as(dec.grid):
            return dec.P0
        return dec.center.projector_nodes(grid)

    def R_values(self, U):
        """R(u) for samples U of shape (..., len(theta_all), n)."""
        V = np.einsum("dk,...kn->...dn", self.E, U)
        return self.R.g(V)

    def split_norms(self, U):
        """(||P_0 u||, ||(I - P_0) u||) on nodes."""
        U = U[..., :self.N1, :]
        shp = U.shape
        flat = U.reshape(-1, shp[-2] * shp[-1])
        p0 = flat @ self.P0.T
        n = shp[-1]
        a = np.max(np.linalg.norm(p0.reshape(-1, shp[-2], n), axis=2), axis=1)
        b = np.max(np.linalg.norm((flat - p0).reshape(-1, shp[-2], n), axis=2), axis=1)
        return a.reshape(shp[:-2]), b.reshape(shp[:-2])

    def R_delta_values(self, U, spec: CutoffSpec):
        a, b = self.split_norms(U)
        w = spec.xi_delta(a) * spec.xi_delta(b)
        return self.R_values(U) * np.asarray(w)[..., None]


def cutoff_R_delta(spec: CutoffSpec, dec: SpectralDecomposition, R: PointNonlinearity, phi: HistorySegment):
    """R(phi) xi(||P_0 phi|| / delta) xi(||(I - P_0) phi|| / delta)."""
    rem = Remainder(R, dec, phi.grid)
    return rem.R_delta_values(np.real(phi.values), spec)


def projector_norms(dec: SpectralDecomposition, grid: Grid):
    """Node-sup operator norms of P_0 and I - P_0 (block row sums of 2-norms)."""
    n = dec.sys.n
    P = Remainder._node_projector(dec, grid)
    I = np.eye(P.shape[0])

    def bnorm(M):
        N1 = M.shape[0] // n
        blocks = M.reshape(N1, n, N1, n).transpose(0, 2, 1, 3)
        return float(np.max(np.sum(np.linalg.norm(blocks, ord=2, axis=(2, 3)), axis=1)))

    return bnorm(P), bnorm(I - P)


def local_lipschitz(R: PointNonlinearity, n, rho, samples=200, seed=0):
    """L(rho) ~ sup ||DR|| over point values in the rho-ball (sampled, with vertices)."""
    rng = np.random.default_rng(seed)
    m = len(R.sigmas)
    pts = [rho * np.sign(rng.standard_normal((m, n))) for _ in range(16)]
    for _ in range(samples):
        v = rng.standard_normal((m, n))
        v *= rho * rng.uniform() ** (1.0 / n) / np.linalg.norm(v, axis=1, keepdims=True)
        pts.append(v)
    best = 0.0
    for V in pts:
        J = R.jac_at(V)
        best = max(best, float(sum(np.linalg.norm(Jd, 2) for Jd in J)))
    return best


def lipschitz_R_delta(spec: CutoffSpec, dec, R, grid, seed=0):
    """L_{R_delta} <= L(4 delta) (1 + 4 xi'_max (||P_0|| + ||I - P_0||))."""
    p0, q0 = projector_norms(dec, grid)
    L4 = local_lipschitz(R, dec.sys.n, 4 * spec.delta, seed=seed)
    return L4 * (1.0 + 4.0 * spec.xi_prime_max * (p0 + q0))


def sampled_lipschitz(spec: CutoffSpec, dec, R, grid, pairs=60, seed=0):
    """max ||R_delta(x) - R_delta(y)|| / ||x - y|| over random nearby segment pairs."""
    rng = np.random.default_rng(seed)
    rem = Remainder(R, dec, grid)
    th = grid.nodes
    n = dec.sys.n
    best = 0.0
    for _ in range(pairs):
        c = rng.standard_normal((4, n))
        X = c[0] + np.outer(np.cos(2 * th), c[1]) + np.outer(th, c[2])
        X *= rng.uniform(0.2, 2.5) * spec.delta / np.max(np.abs(X))
        Y = X + 1e-3 * spec.delta * (c[3] + np.outer(np.sin(3 * th), c[0]))
        d = np.max(np.linalg.norm(X - Y, axis=1))
        best = max(best, float(np.linalg.norm(rem.R_delta_values(X, spec) - rem.R_delta_values(Y, spec))) / d)
    return best


# ---------------------------------------------------------------------------
# K_eta
# ---------------------------------------------------------------------------

# Forcing samples F_k at the uniform nodes are interpolated by the natural
# cubic spline, written in the uniform B-spline basis
#     f(t) = sum_m c_m B((t - t_{m-1}) / dt),  m = 0 .. M+1,
# with the cardinal cubic B-spline B supported on [-2, 2].  Because the
# basis is a family of translates, the stable part of K_eta f at the nodes is
# a discrete convolution of c with one response kernel G(j dt).

def bspline(x):
    x = np.abs(np.asarray(x, dtype=float))
    out = np.where(x < 1, 2.0 / 3.0 - x ** 2 + 0.5 * x ** 3, 0.0)
    return np.where((x >= 1) & (x < 2), (2.0 - x) ** 3 / 6.0, out)


# the four B-spline pieces living on one knot interval, u in [0, 1]
_PIECES = (
    lambda u: (1 - u) ** 3 / 6.0,
    lambda u: 2.0 / 3.0 - u ** 2 + 0.5 * u ** 3,
    lambda u: 2.0 / 3.0 - (1 - u) ** 2 + 0.5 * (1 - u) ** 3,
    lambda u: u ** 3 / 6.0,
)


def spline_coefficients(F):
    """Natural cubic spline through F (M, n) as uniform B-spline coefficients (M + 2, n)."""
    F = np.asarray(F, dtype=float)
    M = F.shape[0]
    c = np.zeros((M + 2,) + F.shape[1:])
    c[1], c[M] = F[0], F[M - 1]
    if M > 2:
        m = M - 2
        ab = np.zeros((3, m))
        ab[0, 1:] = 1.0 / 6.0
        ab[1, :] = 4.0 / 6.0
        ab[2, :-1] = 1.0 / 6.0
        rhs = F[1:M - 1].copy()
        rhs[0] -= c[1] / 6.0
        rhs[-1] -= c[M] / 6.0
        c[2:M] = solve_banded((1, 1), ab, rhs)
    c[0] = 2 * c[1] - c[2]
    c[M + 1] = 2 * c[M] - c[M - 1]
    return c


def spline_function(times, coef):
    """(f, times): the B-spline expansion as a vectorised, extrapolating callable, plus its nodes."""
    dt = times[1] - times[0]
    M = len(times)
    knots = times[0] + dt * np.arange(-3, M + 3)
    sp = BSpline(knots, coef, 3, extrapolate=True)
    return sp, tuple(times)


def _gl(order=24):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


class ResponseKernel:
    """G(s) = int T(s - sigma) P_- l(e_i B(sigma / dt)) dsigma for every input direction e_i.

    Inside the support (s < 2 dt) G comes from the forced solve minus the
    center/unstable coordinates; afterwards it is the homogeneous orbit of
    P_- G(2 dt), restarted from its stable projection on every window.
    """

    def __init__(self, lin, dec, grid, dt, s_max, rtol=1e-11, window=None, decay_tol=1e-18):
        self.lin, self.dec, self.grid, self.dt = lin, dec, grid, float(dt)
        self.n = lin.n
        window = 4 * lin.h if window is None else window
        c, u = dec.center, dec.unstable
        self.Lam = np.zeros((c.dim + u.dim,) * 2)
        self.Lam[:c.dim, :c.dim] = c.Lambda
        self.Lam[c.dim:, c.dim:] = u.Lambda
        self.Wcu = np.vstack([c.W, u.W])
        self.s0 = 2 * self.dt
        self.inputs = []
        xg, wg = _gl()
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = 1.0
            forcing = lambda t, e=e: bspline(t / dt) * e  # noqa: E731
            knots = tuple(dt * np.arange(-1, 2))
            sol0 = solve(lin, HistorySegment.zeros(grid, self.n), self.s0, t0=-self.s0, forcing=forcing,
                         forcing_breaks=knots, rtol=rtol, atol=1e-15, scale=1.0)
            # coordinates of the forced segment at s = -dt, 0, dt by exact panel quadrature
            coords = {}
            for j in (-1, 0, 1):
                s = j * dt
                acc = np.zeros(self.Lam.shape[0])
                for a in np.arange(-2, j) * dt:
                    sig = a + dt * xg
                    E = expm_batch(self.Lam, s - sig)
                    acc += np.einsum("q,qab,b->a", dt * wg * bspline(sig / dt), E, self.Wcu @ e)
                coords[j] = acc
            seg = sol0.segment(self.s0, grid)
            hist = _stable_part(dec, seg)
            wins = []
            start = self.s0
            ref = max(hist.norm(), 1e-300)
            while start < s_max - 1e-12:
                end = min(start + window, s_max)
                sol = solve(lin, hist, end, t0=start, rtol=rtol, atol=1e-15, scale=max(hist.norm(), 1e-300))
                wins.append((start, end, sol))
                seg = sol.segment(end, grid)
                if seg.norm() < decay_tol * ref:
                    break
                hist = _stable_part(dec, seg)
                start = end
            self.inputs.append({"sol0": sol0, "coords": coords, "windows": wins})
        self.s_end = wins[-1][1] if wins else self.s0
        self.J = int(np.floor(self.s_end / dt + 1e-9))

    def _Y(self, inp, u):
        """Stable orbit after the support, at absolute times u >= s0 - h."""
        wins = inp["windows"]
        starts = np.array([w[0] for w in wins])
        k = np.clip(np.searchsorted(starts, u, side="right") - 1, 0, len(wins) - 1)
        out = np.zeros((len(u), self.n))
        for w in np.unique(k):
            m = k == w
            a, b, sol = wins[w]
            out[m] = sol(np.minimum(u[m], b))
        out[u > self.s_end] = 0.0
        return out

    def evaluate(self, js, theta):
        """G(j dt)(theta) for integer lags js; shape (len(js), len(theta), n, n_in)."""
        js = np.asarray(js, dtype=int)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        dt = self.dt
        c, u = self.dec.center, self.dec.unstable
        out = np.zeros((len(js), len(theta), self.n, self.n))
        basis = None
        for i, inp in enumerate(self.inputs):
            late = js >= 2
            if late.any():
                s = js[late] * dt
                uu = (s[:, None] + theta[None, :]).ravel()
                out[late, :, :, i] = self._Y(inp, uu).reshape(late.sum(), len(theta), self.n)
            for j in (-1, 0, 1):
                m = js == j
                if not m.any():
                    continue
                if basis is None:
                    basis = np.concatenate([c.basis(theta), u.basis(theta)], axis=2)
                val = inp["sol0"](j * dt + theta) - basis @ inp["coords"][j]
                out[m, :, :, i] = val[None]
        out[js > self.J] = 0.0
        return out


def expm_batch(A, ts):
    """e^{A t} for an array of t, shape (len(ts), d, d)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if A.shape[0] == 0:
        return np.zeros((len(ts), 0, 0))
    w, V = np.linalg.eig(A)
    if np.linalg.cond(V) < 1e8:
        Vi = np.linalg.inv(V)
        return np.real(np.einsum("ab,tb,bc->tac", V, np.exp(np.outer(ts, w)), Vi))
    return np.array([expm(A * t) for t in ts])


def _stable_part(dec, seg: HistorySegment) -> HistorySegment:
    c, u = dec.center, dec.unstable
    cc = c.coords(seg) if c.dim else np.zeros(0)
    cp = u.coords(seg) if u.dim else np.zeros(0)
    ev = lambda tt: seg.evaluate(tt) - c.basis(tt) @ cc - u.basis(tt) @ cp  # noqa: E731
    return HistorySegment.from_function(seg.grid, ev, seg.breakpoints)


@dataclass(eq=False)
class KEtaSetup:
    """Everything K_eta needs that does not depend on the forcing."""

    lin: LinearDDE
    dec: SpectralDecomposition
    grid: Grid
    eta: float
    T: float
    times: np.ndarray
    kernel: ResponseKernel
    theta_extra: np.ndarray
    rtol: float = 1e-11

    @property
    def n0(self):
        return self.dec.center.dim

    @property
    def n_plus(self):
        return self.dec.unstable.dim

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def theta_all(self):
        return np.concatenate([self.grid.nodes, self.theta_extra])

    def __post_init__(self):
        th = self.theta_all
        self.G = self.kernel.evaluate(np.arange(-1, self.kernel.J + 1), th)  # lag j at index j + 1
        c, u = self.dec.center, self.dec.unstable
        dt = self.dt
        xg, wg = _gl()
        self.basis_c = c.basis(th)
        self.basis_u = u.basis(th)

        def Q(Lam, W, sign):
            d = Lam.shape[0]
            out = np.zeros((4, d, self.lin.n))
            if d == 0:
                return out
            # forward: e^{Lam dt (1 - u)}, backward: e^{-Lam dt u}
            E = expm_batch(Lam, dt * ((1 - xg) if sign > 0 else -xg))
            for j, p in enumerate(_PIECES):
                out[j] = np.einsum("q,qab,bn->an", dt * wg * p(xg), E, W)
            return out

        self.Qc_f, self.Qc_b = Q(c.Lambda, c.W, 1), Q(c.Lambda, c.W, -1)
        self.Qu_b = Q(u.Lambda, u.W, -1)
        self.Ec = expm(c.Lambda * dt) if c.dim else np.zeros((0, 0))
        self.Ec_inv = expm(-c.Lambda * dt) if c.dim else np.zeros((0, 0))
        self.Eu_inv = expm(-u.Lambda * dt) if u.dim else np.zeros((0, 0))


def default_eta(dec: SpectralDecomposition):
    return 0.5 * min(-dec.a, dec.b)


def check_eta(dec, eta):
    gap = min(-dec.a, dec.b)
    if not (0.0 < eta < gap) or (np.isfinite(dec.eps) and eta <= dec.eps):
        raise EtaOutOfRange(f"eta = {eta:g} outside ({dec.eps:g}, {gap:g})")


def truncation_bound(dec, eta, T):
    """Tail of the stable and unstable integrals at t = 0, per unit ||f||_eta."""
    gap = min(-dec.a, dec.b) - eta
    K = max(dec.K_eps, dec.K_lift)
    return K * np.exp(-gap * T) / gap


def default_horizon(dec, eta, tol=1e-10):
    gap = min(-dec.a, dec.b) - eta
    K = max(dec.K_eps, dec.K_lift, 1.0)
    return float(np.log(K / (gap * tol)) / gap)


def make_setup(lin: LinearDDE, dec: SpectralDecomposition, eta=None, T=None, dt=None, grid=None, tol=1e-10,
               window=None, rtol=1e-11, theta_extra=()) -> KEtaSetup:
    eta = default_eta(dec) if eta is None else float(eta)
    check_eta(dec, eta)
    T = default_horizon(dec, eta, tol) if T is None else float(T)
    if truncation_bound(dec, eta, T) > tol:
        raise TruncationTooCoarse(f"tail bound {truncation_bound(dec, eta, T):.3e} > {tol:g} at T = {T:g}")
    dt = min(lin.h / 8, 0.05 / eta) if dt is None else float(dt)
    grid = dec.grid if grid is None else grid
    times = time_nodes(T, dt)
    dt = float(times[1] - times[0])
    kernel = ResponseKernel(lin, dec, grid, dt, 2 * T + 4 * dt, rtol, window)
    extra = np.array([t for t in np.atleast_1d(theta_extra) if not np.any(np.abs(grid.nodes - t) < 1e-14)])
    return KEtaSetup(lin, dec, grid, eta, T, times, kernel, extra, rtol)


@dataclass(eq=False)
class KEtaResult(WeightedTrajectory):
    center_coords: Optional[np.ndarray] = None
    unstable_coords: Optional[np.ndarray] = None
    extra: Optional[np.ndarray] = None
    coef: Optional[np.ndarray] = None


def K_eta(setup: KEtaSetup, f, dense=True) -> KEtaResult:
    """Apply K_eta to a forcing: samples (M, n) on setup.times, or a vectorised callable f(t) -> (M, n)."""
    times = setup.times
    n = setup.lin.n
    M = len(times)
    F = np.asarray(f(times) if callable(f) else f, dtype=float).reshape(M, n)
    coef = spline_coefficients(F)
    c, u = setup.dec.center, setup.dec.unstable
    N1 = setup.grid.N + 1

    # I_0 and I_+ by exact one-step recursions on the knot intervals
    k0 = int(np.argmin(np.abs(times)))
    Zc = np.zeros((M, c.dim))
    for k in range(k0, M - 1):
        Zc[k + 1] = setup.Ec @ Zc[k] + np.einsum("jan,jn->a", setup.Qc_f, coef[k:k + 4])
    for k in range(k0 - 1, -1, -1):
        Zc[k] = setup.Ec_inv @ Zc[k + 1] - np.einsum("jan,jn->a", setup.Qc_b, coef[k:k + 4])
    Zu = np.zeros((M, u.dim))
    for k in range(M - 2, -1, -1):
        Zu[k] = setup.Eu_inv @ Zu[k + 1] - np.einsum("jan,jn->a", setup.Qu_b, coef[k:k + 4])
    vals = np.einsum("knd,md->mkn", setup.basis_c, Zc) + np.einsum("knd,md->mkn", setup.basis_u, Zu)

    # I_-: node k collects sum_m coef[m] G((k - m + 1) dt)
    G = setup.G
    for j in range(-1, setup.kernel.J + 1):
        k_lo, k_hi = max(0, j - 1), min(M - 1, M + j)
        if k_lo > k_hi:
            continue
        ks = np.arange(k_lo, k_hi + 1)
        vals[ks] += np.einsum("ani,ki->kan", G[j + 1], coef[ks + 1 - j])
    res = KEtaResult(setup.eta, setup.T, times, vals[:, :N1], setup.grid, None, Zc, Zu, vals[:, N1:], coef)
    if dense:
        res.dense = lambda t: _dense_segment(setup, res, t)
    return res


def _dense_segment(setup: KEtaSetup, res: KEtaResult, t) -> HistorySegment:
    """(K f)(t) as a segment with an exact evaluator; t must be a time node."""
    k = res.index_of(t)
    if abs(res.times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError("dense K_eta segments are available at time nodes only")
    c, u = setup.dec.center, setup.dec.unstable
    M = len(res.times)
    J = setup.kernel.J
    ms = np.arange(max(0, k + 1 - J), min(M + 2, k + 3))
    js = k + 1 - ms
    coef = res.coef[ms]
    zc, zu = res.center_coords[k], res.unstable_coords[k]

    def ev(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        G = setup.kernel.evaluate(js, theta)
        out = np.einsum("mqni,mi->qn", G, coef)
        return out + c.basis(theta) @ zc + u.basis(theta) @ zu

    # kinks of the B-spline responses live at the knots.  The exact evaluator
    # costs one kernel lookup per lag, so it is sampled once into panels.
    h = setup.lin.h
    bps = tuple(-l for l in np.arange(1, int(h / setup.dt) + 1) * setup.dt if l < h)
    brk = panel_breaks(-h, 0.0, bps)
    ref = cheb_lobatto(DENSE_DEGREE)
    a, b = brk[:-1, None], brk[1:, None]
    pts = a + 0.5 * (b - a) * (ref[None, :] + 1.0)
    pts[:, 0], pts[:, -1] = brk[:-1], brk[1:]
    vals = np.real(ev(pts.ravel())).reshape(len(brk) - 1, DENSE_DEGREE + 1, -1)
    return HistorySegment.from_pieces(setup.grid, PiecewiseCheb(brk, vals))


def K_eta_solution_residual(setup: KEtaSetup, res: KEtaResult, pairs):
    """max ||u(t) - T(t - s) u(s) - conv_s^t(l f)|| over node pairs (t, s), relative to ||f||_eta."""
    lin = setup.lin
    f, knots = spline_function(setup.times, res.coef)
    F = f(setup.times)
    fn = weighted_norm_curve(setup.times, F, setup.eta)
    worst = 0.0
    th = np.linspace(-lin.h, 0.0, 101)
    for t, s in pairs:
        us = res.dense(s)
        br = [x for x in knots if s < x < t]
        sol = solve(lin, us, t, t0=s, forcing=f, forcing_breaks=br, rtol=setup.rtol, atol=1e-15,
                    scale=max(us.norm(), 1e-300) + fn * np.exp(setup.eta * max(abs(s), abs(t))) * (t - s))
        ut = res.dense(t)
        worst = max(worst, float(np.max(np.abs(ut.evaluate(th) - sol(t + th)))))
    return worst / max(fn, 1e-300)


def center_component_at_zero(setup: KEtaSetup, res: KEtaResult):
    """||P_0 (K f)(0)||, from the dense segment and the eigenfunctionals."""
    c = setup.dec.center
    if c.dim == 0:
        return 0.0
    z = c.coords(res.dense(0.0))
    return float(np.max(np.linalg.norm(c.basis(np.linspace(-setup.lin.h, 0, 41)) @ z, axis=1)))


def random_forcing(n, eta, rng, kind=None):
    """Random continuous forcing with finite ||.||_eta, vectorised over t."""
    kind = kind or rng.choice(["trig", "grow", "bump"])
    A = rng.standard_normal((3, n))
    om = rng.uniform(0.3, 3.0, size=3)
    ph = rng.uniform(0, 2 * np.pi, size=3)
    if kind == "trig":
        def f(t):
            t = np.asarray(t, dtype=float)
            return sum(A[i] * np.sin(om[i] * t + ph[i])[..., None] for i in range(3))
    elif kind == "grow":
        g = rng.uniform(0.2, 0.9) * eta

        def f(t):
            t = np.asarray(t, dtype=float)
            return np.exp(g * np.abs(t))[..., None] * (A[0] * np.cos(om[0] * t + ph[0])[..., None] + A[1])
    else:
        c0 = rng.uniform(-2, 2)
        wdt = rng.uniform(0.3, 1.5)

        def f(t):
            t = np.asarray(t, dtype=float)
            return np.exp(-((t - c0) / wdt) ** 2)[..., None] * (A[0] + A[1] * np.sin(om[1] * t)[..., None])
    return f


def estimate_K_norm(setup: KEtaSetup, samples=8, seed=0):
    """Largest ||K f||_eta / ||f||_eta over random forcings."""
    rng = np.random.default_rng(seed)
    best = 0.0
    n = setup.lin.n
    kinds = ["bump", "trig", "grow"]
    for i in range(samples):
        f = random_forcing(n, setup.eta, rng, kinds[i % 3])
        F = f(setup.times)
        res = K_eta(setup, F)
        best = max(best, res.norm() / weighted_norm_curve(setup.times, F, setup.eta))
    return best


def K_norm_bound(dec: SpectralDecomposition, eta):
    """K (1/(eta - eps) + 1/(b - eta) + 1/(-a - eta)) with K covering lifted inputs."""
    K = max(dec.K_eps, dec.K_lift)
    terms = 1.0 / (eta - dec.eps) + 1.0 / (-dec.a - eta)
    if dec.unstable.dim:
        terms += 1.0 / (dec.b - eta)
    return K * terms


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

@dataclass
class DeltaTuning:
    delta: float
    K_norm: float
    L_R_delta: float
    history: list

    @property
    def product(self):
        return self.K_norm * self.L_R_delta


def tune_delta(setup: KEtaSetup, R: PointNonlinearity, delta0=0.5, order=5, K_norm=None, safety=1.25,
               max_halvings=60, seed=0, target=0.5):
    """Halve delta until ||K_eta|| L_{R_delta} <= target."""
    Kn = safety * estimate_K_norm(setup, seed=seed) if K_norm is None else K_norm
    delta = float(delta0)
    hist = []
    for _ in range(max_halvings):
        spec = CutoffSpec(delta, order)
        L = lipschitz_R_delta(spec, setup.dec, R, setup.grid, seed=seed)
        hist.append((delta, L, Kn * L))
        if Kn * L <= target:
            return DeltaTuning(delta, Kn, L, hist)
        delta *= 0.5
    return DeltaTuning(delta, Kn, L, hist)


@dataclass(eq=False)
class FixedPoint:
    phi0: np.ndarray
    u: WeightedTrajectory
    factors: list
    increments: list
    iterations: int
    result: Optional[KEtaResult] = None
    forcing: Optional[np.ndarray] = None

    @property
    def max_factor(self):
        return max(self.factors) if self.factors else 0.0

    def C_segment(self) -> HistorySegment:
        return self.u.segment(0.0)


def center_flow(setup: KEtaSetup, phi0):
    """Samples of T(t) Phi_0 phi0 = Phi_0 e^{Lambda_0 t} phi0 on theta_all."""
    c = setup.dec.center
    Z = np.einsum("tab,b->ta", expm_batch(c.Lambda, setup.times), phi0)
    return np.einsum("knd,md->mkn", setup.basis_c, Z)


def remainder_for(setup: KEtaSetup, R: PointNonlinearity) -> Remainder:
    return Remainder(R, setup.dec, setup.grid, setup.theta_all)


def fixed_point_u_star(setup: KEtaSetup, rem: Remainder, spec: CutoffSpec, phi0, tol=1e-11, max_iter=60,
                       dense=True, noise_floor=1e-13) -> FixedPoint:
    """Iterate u <- T(.)phi + K_eta R_delta(u) from the center flow.

    ``tol`` is relative to ||T(.)phi||_eta.  Contraction factors are logged
    only while increments stay above the numerical noise floor.
    """
    phi0 = np.asarray(phi0, dtype=float)
    base = center_flow(setup, phi0)
    eta = setup.eta
    N1 = setup.grid.N + 1
    wts = np.exp(-eta * np.abs(setup.times))

    def wnorm(V):
        return float(np.max(wts * np.max(np.linalg.norm(V[:, :N1], axis=2), axis=1)))

    scale = wnorm(base) if base.size else 0.0
    U = base.copy()
    if scale == 0.0:
        traj = WeightedTrajectory(eta, setup.T, setup.times, U[:, :N1], setup.grid,
                                  dense=lambda t: HistorySegment.zeros(setup.grid, setup.lin.n))
        return FixedPoint(phi0, traj, [], [], 0)
    factors, incs, bad = [], [], 0
    for it in range(1, max_iter + 1):
        F = rem.R_delta_values(U, spec)
        res = K_eta(setup, F, dense=False)
        Unew = base + np.concatenate([res.values, res.extra], axis=1)
        inc = wnorm(Unew - U)
        incs.append(inc)
        U = Unew
        if len(incs) >= 2 and incs[-2] > noise_floor * scale * 1e3:
            fac = inc / incs[-2]
            factors.append(fac)
            if fac > 0.9:
                bad += 1
                if bad >= 2:
                    raise ContractionFailure(f"contraction factor {fac:.3f} > 0.9 (twice)")
        if inc <= tol * scale:
            break
    else:
        raise NotConverged(f"fixed point not converged after {max_iter} iterations (increment {incs[-1]:.3e})")
    F = rem.R_delta_values(U, spec)
    res = K_eta(setup, F, dense=dense)
    c = setup.dec.center
    traj = WeightedTrajectory(eta, setup.T, setup.times, base[:, :N1] + res.values, setup.grid)
    if dense:
        def seg(t):
            kseg = res.dense(t)
            z = expm_batch(c.Lambda, [t])[0] @ phi0
            return HistorySegment.from_function(setup.grid, lambda th: kseg.evaluate(th) + c.basis(th) @ z,
                                                kseg.breakpoints)
        traj.dense = seg
    return FixedPoint(phi0, traj, factors, incs, it, res, F)


# ---------------------------------------------------------------------------
# manifold model
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CenterManifoldModel:
    sys: NonlinearDDE
    lin: LinearDDE
    R: PointNonlinearity
    dec: SpectralDecomposition
    setup: KEtaSetup
    spec: CutoffSpec
    tuning: Optional[DeltaTuning]
    samples: list = field(default_factory=list)
    contraction_log: list = field(default_factory=list)
    poly: Optional[dict] = None

    @property
    def delta(self):
        return self.spec.delta

    @property
    def eta(self):
        return self.setup.eta

    def C(self, phi0, **kw) -> FixedPoint:
        rem = remainder_for(self.setup, self.R)
        return fixed_point_u_star(self.setup, rem, self.spec, phi0, **kw)

    def tangent(self, phi0):
        return self.dec.center.segment(np.asarray(phi0, dtype=float), self.setup.grid)

    def to_dict(self):
        return {
            "delta": self.delta,
            "eta": self.eta,
            "T_inf": self.setup.T,
            "dt": float(self.setup.times[1] - self.setup.times[0]),
            "N": self.setup.grid.N,
            "theta_nodes": self.setup.grid.nodes.tolist(),
            "samples": [{"phi0": s["phi0"].tolist(), "values": s["values"].tolist(), "norm": s["norm"],
                         "inside": s["inside"], "iterations": s["iterations"], "max_factor": s["max_factor"]}
                        for s in self.samples],
            "poly": self.poly,
        }


def build_model(sys: NonlinearDDE, dec: Optional[SpectralDecomposition] = None, eta=None, T=None, dt=None,
                grid=None, delta=None, order=5, tol=1e-10, seed=0, delta0=0.5) -> CenterManifoldModel:
    from .spectral import build_decomposition

    lin, R = split_G(sys)
    if dec is None:
        dec = build_decomposition(lin, grid, seed=seed)
    setup = make_setup(lin, dec, eta, T, dt, grid, tol, theta_extra=-np.asarray(R.sigmas, dtype=float))
    if delta is None:
        tuning = tune_delta(setup, R, delta0=delta0, order=order, seed=seed)
        spec = CutoffSpec(tuning.delta, order)
    else:
        spec = CutoffSpec(float(delta), order)
        Kn = 1.25 * estimate_K_norm(setup, seed=seed)
        L = lipschitz_R_delta(spec, dec, R, setup.grid, seed=seed)
        tuning = DeltaTuning(spec.delta, Kn, L, [(spec.delta, L, Kn * L)])
    spec.L_curve = lambda rho: local_lipschitz(R, lin.n, rho, seed=seed)
    return CenterManifoldModel(sys, lin, R, dec, setup, spec, tuning)


def with_delta(model: CenterManifoldModel, delta, seed=0) -> CenterManifoldModel:
    """The same model with a forced cut-off radius (the norm estimate of K_eta is reused)."""
    spec = CutoffSpec(float(delta), model.spec.order, model.spec.L_curve)
    L = lipschitz_R_delta(spec, model.dec, model.R, model.setup.grid, seed=seed)
    Kn = model.tuning.K_norm
    tuning = DeltaTuning(spec.delta, Kn, L, [(spec.delta, L, Kn * L)])
    return CenterManifoldModel(model.sys, model.lin, model.R, model.dec, model.setup, spec, tuning)


def sample_phi0(model: CenterManifoldModel, radii_frac=(0.5, 0.25), angles=6):
    """Center coordinates with ||Phi_0 phi0|| at the given fractions of delta."""
    c = model.dec.center
    th = np.linspace(-model.lin.h, 0, 81)
    out = [np.zeros(c.dim)]
    for r in radii_frac:
        for k in range(angles):
            if c.dim == 1:
                d = np.array([1.0 if k % 2 == 0 else -1.0])
            else:
                ang = 2 * np.pi * k / angles
                d = np.zeros(c.dim)
                d[0], d[1] = np.cos(ang), np.sin(ang)
            nrm = np.max(np.linalg.norm(c.basis(th) @ d, axis=1))
            out.append(r * model.delta * d / nrm)
    return out


def cm_map(model: CenterManifoldModel, phi0_list, threads=1, **kw) -> CenterManifoldModel:
    """Fill model.samples with C(phi0) = u*(phi0)(0)."""
    grid = model.setup.grid

    def one(p):
        fp = model.C(p, **kw)
        seg = fp.C_segment()
        return p, fp, seg

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, phi0_list))
    else:
        results = [one(p) for p in phi0_list]
    for p, fp, seg in results:
        nrm = seg.norm()
        model.samples.append({"phi0": np.asarray(p, dtype=float), "values": np.real(seg.values), "segment": seg,
                              "norm": nrm, "inside": bool(nrm < model.delta), "iterations": fp.iterations,
                              "max_factor": fp.max_factor, "factors": list(fp.factors)})
        model.contraction_log.append(list(fp.factors))
    model.poly = fit_polynomial(model, degree=min(3, max(1, model.sys.k)))
    log.info("manifold samples: %d (grid N=%d)", len(model.samples), grid.N)
    return model


def fit_polynomial(model: CenterManifoldModel, degree=2):
    """Least-squares polynomial in phi0 for the node values of C (coefficients per monomial)."""
    if not model.samples or model.dec.center.dim == 0:
        return None
    d = model.dec.center.dim
    from itertools import combinations_with_replacement

    monos = [m for k in range(1, degree + 1) for m in combinations_with_replacement(range(d), k)]
    P = np.array([s["phi0"] for s in model.samples])
    scale = max(float(np.max(np.abs(P))), 1e-300)
    A = np.column_stack([np.prod(P[:, list(m)] / scale, axis=1) for m in monos])
    Y = np.array([s["values"].reshape(-1) for s in model.samples])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    return {"monomials": [list(m) for m in monos], "scale": scale, "coefficients": coef.tolist()}


def lipschitz_pairs(model: CenterManifoldModel, pairs=30, seed=0):
    """(max ratio ||C(phi) - C(psi)|| / ||phi - psi||, bound 2 K_eps) over sample pairs."""
    rng = np.random.default_rng(seed)
    S = model.samples
    idx = [(i, j) for i in range(len(S)) for j in range(i + 1, len(S))]
    rng.shuffle(idx)
    idx = idx[:pairs]
    th = np.linspace(-model.lin.h, 0, 161)
    c = model.dec.center
    worst = 0.0
    for i, j in idx:
        dC = np.max(np.linalg.norm(S[i]["segment"].evaluate(th) - S[j]["segment"].evaluate(th), axis=1))
        dphi = np.max(np.linalg.norm(c.basis(th) @ (S[i]["phi0"] - S[j]["phi0"]), axis=1))
        worst = max(worst, float(dC / dphi))
    return worst, 2 * model.dec.K_eps, len(idx)


def tangency_fit(model: CenterManifoldModel, direction=None, fracs=(0.4, 0.2, 0.1, 0.05, 0.025), **kw):
    """Fit ||C(phi0) - Phi_0 phi0|| ~ C ||phi0||^p along a ray."""
    c = model.dec.center
    th = np.linspace(-model.lin.h, 0, 161)
    d = np.zeros(c.dim)
    d[0] = 1.0
    d = d if direction is None else np.asarray(direction, dtype=float)
    d = d / np.max(np.linalg.norm(c.basis(th) @ d, axis=1))
    rs, errs = [], []
    for fr in fracs:
        p = fr * model.delta * d
        seg = model.C(p, **kw).C_segment()
        dev = np.max(np.linalg.norm(seg.evaluate(th) - c.basis(th) @ p, axis=1))
        rs.append(fr * model.delta)
        errs.append(float(dev))
    rs, errs = np.array(rs), np.array(errs)
    if np.all(errs < 1e-300):
        return np.inf, 0.0, rs, errs
    p, logC = np.polyfit(np.log(rs), np.log(np.maximum(errs, 1e-300)), 1)
    return float(p), float(np.exp(logC)), rs, errs


def reduced_dynamics(model: CenterManifoldModel, phi0, **kw):
    """Lambda_0 phi0 + W_0 R(C(phi0))."""
    c = model.dec.center
    phi0 = np.asarray(phi0, dtype=float)
    if not np.any(phi0):
        return np.zeros(c.dim)
    seg = model.C(phi0, **kw).C_segment()
    V = seg.evaluate(-np.asarray(model.R.sigmas, dtype=float))
    return c.Lambda @ phi0 + c.W @ np.asarray(model.R.g(V))


def reduced_linear_part(model: CenterManifoldModel, step_frac=1e-3, **kw):
    """Central-difference Jacobian of the reduced field at 0 and its eigenvalues."""
    d = model.dec.center.dim
    th = np.linspace(-model.lin.h, 0, 81)
    J = np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        e *= step_frac * model.delta / np.max(np.linalg.norm(model.dec.center.basis(th) @ e, axis=1))
        J[:, k] = (reduced_dynamics(model, e, **kw) - reduced_dynamics(model, -e, **kw)) / (2 * e[k])
    return J, np.linalg.eigvals(J)


def invariance_residual(model: CenterManifoldModel, phi0, t_span=(0.0, 10.0), n_times=11, **kw):
    """Max distance of Sigma(t, C(phi0)) from C(P_0-coordinates) over sampled t (absolute, relative)."""
    c = model.dec.center
    grid = model.setup.grid
    psi = model.C(phi0, **kw).C_segment()
    t1 = t_span[1]
    sol = semiflow_solution(model.sys, t1, psi, t0=0.0, rtol=1e-11, atol=1e-14, ceiling=None)
    rem = Remainder(model.R, model.dec, grid)
    th = np.linspace(-model.lin.h, 0, 161)
    worst = 0.0
    rows = []
    for t in np.linspace(t_span[0], t1, n_times):
        seg = sol.segment(t, grid) if t > 0 else psi
        a, b = rem.split_norms(np.real(seg.values)[None])
        if a[0] > model.delta or b[0] > model.delta:
            raise LeftDeltaBall(t)
        z = c.coords(seg)
        Cz = model.C(z, **kw).C_segment()
        xs = seg.evaluate(th)
        dist = float(np.max(np.linalg.norm(xs - Cz.evaluate(th), axis=1)))
        # distance from the tangent space, for scale
        lin_dist = float(np.max(np.linalg.norm(xs - c.basis(th) @ z, axis=1)))
        rows.append({"t": float(t), "distance": dist, "tangent_distance": lin_dist, "norm": seg.norm()})
        worst = max(worst, dist)
    return worst, worst / max(psi.norm(), 1e-300), rows


def convergence_study(model: CenterManifoldModel, phi0, **kw):
    """Change of C(phi0) under N -> N + 8, dt -> dt / 2, T -> 1.5 T (relative to ||C(phi0)||)."""
    from .spectral import build_decomposition

    th = np.linspace(-model.lin.h, 0, 161)
    base = model.C(phi0, **kw).C_segment()
    ref = base.evaluate(th)
    nrm = max(float(np.max(np.abs(ref))), 1e-300)
    st = model.setup
    out = {}
    variants = {
        "N": dict(grid=Grid(model.lin.h, st.grid.N + 8)),
        "dt": dict(dt=0.5 * (st.times[1] - st.times[0])),
        "T_inf": dict(T=1.5 * st.T),
    }
    for name, kwv in variants.items():
        t0 = time.perf_counter()
        dec = model.dec
        if "grid" in kwv:
            dec = build_decomposition(model.lin, kwv["grid"], constants=False)
            dec.a, dec.b, dec.eps = model.dec.a, model.dec.b, model.dec.eps
            dec.K_eps, dec.K_lift = model.dec.K_eps, model.dec.K_lift
        setup = make_setup(model.lin, dec, st.eta, kwv.get("T", st.T), kwv.get("dt", st.times[1] - st.times[0]),
                           kwv.get("grid", st.grid), tol=1.0, theta_extra=st.theta_extra)
        rem = remainder_for(setup, model.R)
        seg = fixed_point_u_star(setup, rem, model.spec, phi0, **kw).C_segment()
        out[name] = {"change": float(np.max(np.abs(seg.evaluate(th) - ref))) / nrm,
                     "seconds": time.perf_counter() - t0}
    return out


def model_checks(model: CenterManifoldModel) -> List[Check]:
    t = model.tuning
    return [Check("||K_eta|| L_R_delta (auto-tuned delta)", t.product, 0.5)]
