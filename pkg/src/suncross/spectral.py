"""Characteristic matrix, eigenpairs, spectral projectors and the trichotomy.

Eigenvalues start from the pseudospectral generator and are polished by
Newton's method on det Delta.  Projectors onto finite spectral sets are
computed twice: as contour integrals of the pseudospectral resolvent (node
matrices) and through eigenfunctions and the classical bilinear form (dense
functionals).  Complex pairs are stored in real block form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import expm

from .errors import (BiorthogonalityFailure, ContourThroughSpectrum, FitFailure, MaxCountExceeded,
                     NonSemisimple, SpectralGapViolation)
from .grid import Grid, gauss_legendre_panels, panel_breaks
from .semigroup import _probe_segments, solve
from .state import HistorySegment, SunStarElement, ell, in_jX_residual
from .systems import LinearDDE

log = logging.getLogger(__name__)

SPECTRAL_N = 40


def char_matrix(sys: LinearDDE, lam) -> np.ndarray:
    return sys.char_matrix(lam)


# ---------------------------------------------------------------------------
# eigenpairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Eigenpair:
    lam: complex
    v: np.ndarray
    w: np.ndarray
    normalization: complex
    residual_right: float
    residual_left: float

    @property
    def is_real(self):
        return self.lam.imag == 0.0

    def phi(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(self.lam * theta)[:, None] * self.v[None, :]


def newton_refine(sys: LinearDDE, lam, maxit=60):
    lam = complex(lam)
    for _ in range(maxit):
        D = sys.char_matrix(lam)
        try:
            step = 1.0 / np.trace(np.linalg.solve(D, sys.char_matrix_derivative(lam)))
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(step):
            break
        lam = lam - step
        if abs(step) <= 1e-15 * (1.0 + abs(lam)):
            break
    return lam


def _eigenpair(sys: LinearDDE, lam, tol):
    D = sys.char_matrix(lam)
    if lam.imag == 0.0:
        D = D.real
    U, S, Vh = np.linalg.svd(D)
    v = np.conj(Vh[-1])
    w = np.conj(U[:, -1])
    scale = max(1.0, abs(lam))
    if S.size > 1 and S[-2] <= 1e3 * tol * scale:
        raise NonSemisimple(f"eigenvalue {lam:.10g} has geometric multiplicity > 1")
    s = w @ sys.char_matrix_derivative(lam) @ v
    if abs(s) < 1e-8:
        raise NonSemisimple(f"eigenvalue {lam:.10g} is not algebraically simple (w^T Delta' v = {abs(s):.2e})")
    w = w / s
    rr = float(np.linalg.norm(sys.char_matrix(lam) @ v) / np.linalg.norm(v))
    rl = float(np.linalg.norm(w @ sys.char_matrix(lam)) / np.linalg.norm(w))
    return Eigenpair(complex(lam), v.astype(complex), w.astype(complex), complex(s), rr, rl)


def default_region(sys: LinearDDE):
    rho = np.linalg.norm(sys.B, 2) + sum(np.linalg.norm(A, 2) for _, A in sys.delays)
    if sys.has_kernel:
        th = np.linspace(-sys.h, 0, 65)
        rho += sys.h * float(np.max([np.linalg.norm(K, 2) for K in sys.kernel_at(th)]))
    return (-(rho + 5.0 / sys.h), rho + 1.0, -(rho + 40.0 / sys.h), rho + 40.0 / sys.h)


def find_eigenvalues(sys: LinearDDE, region=None, max_count=64, N=SPECTRAL_N, tol=1e-10) -> List[Eigenpair]:
    """Eigenpairs with eigenvalue in ``region = (re_min, re_max, im_min, im_max)``."""
    region = default_region(sys) if region is None else region
    re0, re1, im0, im1 = region
    if sys.is_ode:
        guesses = np.linalg.eigvals(sys.B)
    else:
        guesses = np.linalg.eigvals(sys.generator_matrix(Grid(sys.h, N)))
    pad = 0.05 * max(1.0, re1 - re0)
    guesses = [g for g in guesses if re0 - pad <= g.real <= re1 + pad and im0 - pad <= g.imag <= im1 + pad
               and g.imag >= -1e-9]
    roots = []
    for g in sorted(guesses, key=lambda z: -z.real):
        lam = newton_refine(sys, g)
        if abs(lam.imag) <= 1e-9 * max(1.0, abs(lam)):
            lam = newton_refine(sys, complex(lam.real, 0.0))
            lam = complex(lam.real, 0.0)
        if lam.imag < 0:
            lam = lam.conjugate()
        smin = np.linalg.svd(sys.char_matrix(lam), compute_uv=False)[-1]
        if smin > tol * max(1.0, abs(lam)):
            continue
        if not (re0 <= lam.real <= re1 and im0 <= lam.imag <= im1):
            continue
        if any(abs(lam - r) <= 1e-7 * (1.0 + abs(r)) for r in roots):
            continue
        roots.append(lam)
    full = []
    for lam in roots:
        full.append(lam)
        if lam.imag != 0.0 and im0 <= -lam.imag:
            full.append(lam.conjugate())
    if len(full) > max_count:
        raise MaxCountExceeded(f"{len(full)} eigenvalues in region exceed max_count = {max_count}")
    full.sort(key=lambda z: (-z.real, -z.imag))
    return [_eigenpair(sys, lam, tol) for lam in full]


# ---------------------------------------------------------------------------
# contour projectors on the pseudospectral grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ellipse:
    center: float
    ra: float
    rb: float

    def nodes(self, m):
        phi = 2 * np.pi * (np.arange(m) + 0.5) / m
        lam = self.center + self.ra * np.cos(phi) + 1j * self.rb * np.sin(phi)
        dlam = -self.ra * np.sin(phi) + 1j * self.rb * np.cos(phi)
        return lam, dlam * (2 * np.pi / m)

    def level(self, z):
        z = np.asarray(z)
        return np.sqrt(((z.real - self.center) / self.ra) ** 2 + (z.imag / self.rb) ** 2)

    def encloses(self, z):
        return self.level(z) < 1.0


@dataclass
class ProjectorResult:
    P: np.ndarray
    imag_residual: float
    idempotency: float
    nodes: int


def contour_projector(A: np.ndarray, ellipse: Ellipse, nodes=64, min_level_gap=0.02, max_nodes=2048,
                      target=1e-12) -> ProjectorResult:
    """(1/2 pi i) contour integral of (lam I - A)^{-1}, refined by doubling the node count."""
    ev = np.linalg.eigvals(A)
    lev = ellipse.level(ev)
    if np.any(np.abs(lev - 1.0) < min_level_gap):
        raise ContourThroughSpectrum("contour passes too close to an eigenvalue of the discretised generator")
    I = np.eye(A.shape[0])

    def quad(m):
        lam, dl = ellipse.nodes(m)
        S = np.zeros_like(A, dtype=complex)
        for z, d in zip(lam, dl):
            S += np.linalg.solve(z * I - A, I) * d
        return S / (2j * np.pi)

    m = nodes
    S = quad(m)
    while m < max_nodes:
        S2 = quad(2 * m)
        diff = np.max(np.abs(S2 - S))
        S, m = S2, 2 * m
        if diff <= target * max(1.0, np.max(np.abs(S))):
            break
    imag = float(np.max(np.abs(S.imag)))
    P = S.real
    idem = float(np.max(np.abs(P @ P - P)))
    return ProjectorResult(P, imag, idem, m)


def ellipse_around(lams, exclude_re=None):
    """Conjugate-symmetric ellipse containing ``lams`` inside the real-part window ``exclude_re``."""
    lams = np.asarray(lams)
    lo, hi = exclude_re
    center = 0.5 * (lo + hi)
    ra = 0.5 * (hi - lo)
    inner = 1.0 - ((lams.real - center) / ra) ** 2
    if np.any(inner <= 0):
        raise SpectralGapViolation("spectral set not separated by the requested real-part window")
    rb = 1.25 * float(np.max(np.abs(lams.imag) / np.sqrt(inner))) + 0.5
    return Ellipse(center, ra, rb)


# ---------------------------------------------------------------------------
# eigenfunctionals (classical bilinear form)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EigenFunctional:
    """x -> w^T head + int_0^h g(s) . tail(-s) ds for the left eigenvector w of Delta(lam)."""

    sys: LinearDDE
    lam: complex
    w: np.ndarray

    def density(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        lam, w = self.lam, self.w
        out = np.zeros((len(s), self.sys.n), dtype=complex)
        for tau, A in self.sys.delays:
            mask = s <= tau + 1e-14
            out[mask] += np.exp(-lam * (tau - s[mask]))[:, None] * (w @ A)[None, :]
        if self.sys.has_kernel:
            h = self.sys.h
            gx, gw = np.polynomial.legendre.leggauss(24)
            for k, sk in enumerate(s):
                a, b = -h, -sk
                if b <= a:
                    continue
                th = 0.5 * (b - a) * gx + 0.5 * (a + b)
                wt = 0.5 * (b - a) * gw * np.exp(-lam * (-sk - th))
                out[k] += np.einsum("q,i,qij->j", wt, w, self.sys.kernel_at(th))
        return out

    def _panels(self, extra=()):
        h = self.sys.h
        inner = [tau for tau, _ in self.sys.delays] + [-b for b in extra]
        return gauss_legendre_panels(panel_breaks(0.0, h, inner, max_len=h / 8))

    def pair(self, head, tail_eval, breakpoints=()):
        s, ws = self._panels(breakpoints)
        vals = tail_eval(-s)
        return complex(self.w @ head + np.einsum("q,qj,qj->", ws, self.density(s), vals))

    def pair_segment(self, phi: HistorySegment):
        return self.pair(phi.evaluate(np.array([0.0]))[0], phi.evaluate, phi.breakpoints)

    def pair_star(self, x: SunStarElement):
        bps = tuple(getattr(x.tail_fn, "breaks", np.zeros(2))[1:-1])
        return self.pair(x.head, x.tail_at, bps)

    def row(self, grid: Grid):
        """Row matrix (n, (N+1) n) acting on node values through interpolation."""
        n = self.sys.n
        s, ws = self._panels()
        E = grid.interp_matrix(-s)
        g = self.density(s)
        R = np.einsum("q,qj,qk->jk", ws, g, E)  # (n, N+1): R[j, k]
        M = np.zeros((grid.N + 1, n), dtype=complex)
        M[:, :] = R.T
        M[-1] += self.w
        return M.reshape(1, -1)


# ---------------------------------------------------------------------------
# spectral subspaces in real form
# ---------------------------------------------------------------------------

@dataclass
class SpectralSubspace:
    """Real basis Phi, coordinate functionals and generator block of a finite spectral set."""

    sys: LinearDDE
    pairs: list
    Lambda: np.ndarray
    W: np.ndarray

    @classmethod
    def from_pairs(cls, sys, pairs):
        reps = [p for p in pairs if p.lam.imag >= 0]
        blocks, heads = [], []
        for p in reps:
            if p.lam.imag == 0:
                blocks.append(np.array([[p.lam.real]]))
                heads.append(np.real(p.w)[None, :])
            else:
                mu, om = p.lam.real, p.lam.imag
                blocks.append(np.array([[mu, om], [-om, mu]]))
                heads.append(np.stack([2 * np.real(p.w), -2 * np.imag(p.w)]))
        d = sum(b.shape[0] for b in blocks)
        Lam = np.zeros((d, d))
        k = 0
        for b in blocks:
            m = b.shape[0]
            Lam[k:k + m, k:k + m] = b
            k += m
        W = np.concatenate(heads) if heads else np.zeros((0, sys.n))
        return cls(sys, reps, Lam, W)

    @property
    def dim(self):
        return self.Lambda.shape[0]

    def functionals(self):
        return [EigenFunctional(self.sys, p.lam, p.w) for p in self.pairs]

    def basis(self, theta):
        """Phi(theta), shape (k, n, dim)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        cols = []
        for p in self.pairs:
            f = p.phi(theta)
            if p.lam.imag == 0:
                cols.append(np.real(f))
            else:
                cols.extend([np.real(f), np.imag(f)])
        if not cols:
            return np.zeros((len(theta), self.sys.n, 0))
        return np.stack(cols, axis=2)

    def _coords(self, pair_values):
        out = []
        for p, c in zip(self.pairs, pair_values):
            if p.lam.imag == 0:
                out.append(c.real)
            else:
                out.extend([2 * c.real, -2 * c.imag])
        return np.asarray(out, dtype=float)

    def coords(self, phi: HistorySegment):
        return self._coords([f.pair_segment(phi) for f in self.functionals()])

    def coords_star(self, x: SunStarElement):
        return self._coords([f.pair_star(x) for f in self.functionals()])

    def segment(self, z, grid: Grid) -> HistorySegment:
        z = np.asarray(z, dtype=float)
        return HistorySegment.from_function(grid, lambda th: self.basis(th) @ z)

    def coord_rows(self, grid: Grid):
        rows = []
        for p, f in zip(self.pairs, self.functionals()):
            r = f.row(grid)
            if p.lam.imag == 0:
                rows.append(r.real)
            else:
                rows.extend([2 * r.real, -2 * r.imag])
        if not rows:
            return np.zeros((0, (grid.N + 1) * self.sys.n))
        return np.concatenate(rows)

    def basis_nodes(self, grid: Grid):
        return self.basis(grid.nodes).reshape(-1, self.dim)

    def projector_nodes(self, grid: Grid):
        return self.basis_nodes(grid) @ self.coord_rows(grid)

    def flow(self, t):
        return expm(self.Lambda * t)


@dataclass
class SpectralDecomposition:
    sys: LinearDDE
    grid: Grid
    eigenpairs: list
    center: SpectralSubspace
    unstable: SpectralSubspace
    gamma_minus: float
    gamma_plus: float
    P0: np.ndarray
    Pp: np.ndarray
    Pm: np.ndarray
    contour_info: dict
    a: float = np.nan
    b: float = np.nan
    eps: float = np.nan
    K_eps: float = np.nan
    K_lift: float = np.nan
    constants_log: dict = field(default_factory=dict)

    @property
    def Lambda0(self):
        return self.center.Lambda

    @property
    def W0(self):
        return self.center.W

    def P0_segment(self, phi):
        return self.center.segment(self.center.coords(phi), phi.grid)

    def Pp_segment(self, phi):
        return self.unstable.segment(self.unstable.coords(phi), phi.grid)

    def Pm_segment(self, phi: HistorySegment) -> HistorySegment:
        z0 = self.center.coords(phi)
        zp = self.unstable.coords(phi)
        c, u = self.center, self.unstable
        f = phi.evaluate

        def ev(th):
            return f(th) - c.basis(th) @ z0 - u.basis(th) @ zp

        return HistorySegment.from_function(phi.grid, ev, phi.breakpoints)

    def lift_star(self, x: SunStarElement, which="center") -> SunStarElement:
        """P^{sun-star} x for x in span(jX, lY) via the eigen-representation."""
        sub = self.center if which == "center" else self.unstable
        z = sub.coords_star(x)
        seg = sub.segment(z, x.grid)
        return SunStarElement(x.grid, seg.values[-1], seg.values, seg.evaluate)

    def summary(self):
        return {
            "eigenvalues": [p.lam for p in self.eigenpairs],
            "dim_center": self.center.dim,
            "dim_unstable": self.unstable.dim,
            "gamma_minus": self.gamma_minus,
            "gamma_plus": self.gamma_plus,
        }


def build_decomposition(sys: LinearDDE, grid: Optional[Grid] = None, gap=1e-3, center_tol=1e-8,
                        region=None, nodes=64, eps=None, constants=True, seed=0,
                        t_max=None) -> SpectralDecomposition:
    grid = grid or Grid(sys.h)
    pairs = find_eigenvalues(sys, region)
    center = [p for p in pairs if abs(p.lam.real) <= center_tol]
    unstable = [p for p in pairs if p.lam.real > center_tol]
    stable = [p for p in pairs if p.lam.real < -center_tol]
    bad = [p.lam for p in pairs if center_tol < abs(p.lam.real) < gap]
    if bad:
        raise SpectralGapViolation(f"eigenvalues {bad} lie within the gap |Re| < {gap}")
    if not stable:
        raise SpectralGapViolation("no stable eigenvalue located; enlarge the search region")
    gm = max(p.lam.real for p in stable)
    gp = min(p.lam.real for p in unstable) if unstable else np.inf
    A = sys.generator_matrix(grid)
    info = {}
    half = 0.5 * min(-gm, gp)
    I = np.eye(A.shape[0])
    if center:
        res = contour_projector(A, ellipse_around([p.lam for p in center], (-half, half)), nodes)
        P0 = res.P
        info["center"] = res
    else:
        P0 = np.zeros_like(I)
    if unstable:
        top = max(p.lam.real for p in unstable)
        res = contour_projector(A, ellipse_around([p.lam for p in unstable], (0.5 * gp, top + 1.0)), nodes)
        Pp = res.P
        info["unstable"] = res
    else:
        Pp = np.zeros_like(I)
    dec = SpectralDecomposition(sys, grid, pairs, SpectralSubspace.from_pairs(sys, center),
                                SpectralSubspace.from_pairs(sys, unstable), gm, gp, P0, Pp, I - P0 - Pp, info)
    if constants:
        trichotomy_constants(sys, dec, eps=eps, t_max=t_max, seed=seed)
    return dec


# ---------------------------------------------------------------------------
# trichotomy constants
# ---------------------------------------------------------------------------

def _sup_norm_fine(vals):
    return float(np.max(np.linalg.norm(vals, axis=-1)))


def envelope_slope(ts, norms):
    """Slope of log ||x|| through its local maxima (exact for a single decaying mode)."""
    ln = np.log(np.maximum(norms, 1e-300))
    k = np.where((ln[1:-1] >= ln[:-2]) & (ln[1:-1] >= ln[2:]))[0] + 1
    if len(k) < 2:
        return float(np.polyfit(ts, ln, 1)[0])
    return float(np.polyfit(ts[k], ln[k], 1)[0])


def trichotomy_constants(sys: LinearDDE, dec: SpectralDecomposition, eps=None, t_max=None, probes=8, seed=0,
                         margin_frac=0.1, K_max=1e6):
    """Fit a, b and a single K_eps for the three trichotomy inequalities."""
    gm, gp = dec.gamma_minus, dec.gamma_plus
    a = gm + margin_frac * abs(gm)
    b = gp - margin_frac * gp if np.isfinite(gp) else -a
    eps = min(-a, b) / 4 if eps is None else eps
    t_max = min(30 * sys.h, 14.0 / abs(a)) if t_max is None else t_max
    grid = dec.grid
    fine = np.linspace(-sys.h, 0.0, 161)
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, t_max, 1201)
    logd = {}

    tc = np.linspace(0.0, t_max, 241)

    def flow_ratio(sub, Z, times, rates, n0):
        """max over columns z and times t of ||Phi e^{Lambda t} z|| / (rate(t) n0(z))."""
        Phi = sub.basis(fine)
        F = np.stack([sub.flow(t) for t in times])
        V = np.einsum("knd,tde,ez->tzk", Phi, F, Z) if sub.sys.n == 1 else None
        if V is None:
            V = np.linalg.norm(np.einsum("knd,tde,ez->tzkn", Phi, F, Z), axis=-1)
        else:
            V = np.abs(V)
        return float(np.max(V.max(axis=2) / (rates[:, None] * n0[None, :])))

    def sub_K(sub, times, rates):
        if sub.dim == 0:
            return 1.0
        Z = np.concatenate([np.eye(sub.dim), rng.standard_normal((sub.dim, 16))], axis=1)
        n0 = np.max(np.linalg.norm(np.einsum("knd,dz->zkn", sub.basis(fine), Z), axis=-1), axis=1)
        return flow_ratio(sub, Z, times, rates, n0)

    both = np.concatenate([-tc, tc])
    K0 = sub_K(dec.center, both, np.exp(eps * np.abs(both)))
    Kp = sub_K(dec.unstable, -tc, np.exp(-b * tc))

    # stable part: simulate T(t) P_- phi
    Km, worst = 0.0, np.zeros(len(ts))
    lead = max((p for p in dec.eigenpairs if p.lam.real <= gm), key=lambda p: (p.lam.real, p.lam.imag))
    for phi in _probe_segments(grid, sys.n, rng, probes):
        pm = dec.Pm_segment(phi)
        n0 = pm.norm()
        if n0 < 1e-12:
            continue
        sol = solve(sys, pm, t_max, rtol=1e-10, atol=1e-13)
        nv = np.max(np.linalg.norm(sol.node_values(ts, grid), axis=2), axis=1) / n0
        Km = max(Km, float(np.max(nv / np.exp(a * ts))))
        worst = np.maximum(worst, nv)
    tail = ts >= t_max / 3
    slope = envelope_slope(ts[tail], worst[tail])

    # lifted inputs: l(y) split by the adjoint heads
    Kl = 0.0
    for _ in range(4):
        y = rng.standard_normal(sys.n)
        y /= np.linalg.norm(y)
        x = ell(y, grid)
        for sub in (dec.center, dec.unstable):
            if sub.dim:
                x = x - dec.lift_star(ell(y, grid), "center" if sub is dec.center else "unstable")
        sol = solve(sys, x, t_max, rtol=1e-10, atol=1e-13, scale=1.0)
        nv = np.max(np.linalg.norm(sol.node_values(ts, grid), axis=2), axis=1)
        nv[0] = max(nv[0], np.linalg.norm(x.head))
        Kl = max(Kl, float(np.max(nv / np.exp(a * ts))))
        if dec.center.dim:
            Kl = max(Kl, flow_ratio(dec.center, (dec.W0 @ y)[:, None], both, np.exp(eps * np.abs(both)), np.ones(1)))
        if dec.unstable.dim:
            Kl = max(Kl, flow_ratio(dec.unstable, (dec.unstable.W @ y)[:, None], -tc, np.exp(-b * tc), np.ones(1)))

    K = max(K0, Kp, Km)
    logd.update(K_center=K0, K_unstable=Kp, K_stable=Km, K_lift=Kl, stable_slope=slope,
                leading_stable=lead.lam, t_max=t_max)
    if K > K_max or Kl > K_max:
        raise FitFailure(f"trichotomy constant {max(K, Kl):.3g} exceeds {K_max:g}; spectrum misclassified?")
    dec.a, dec.b, dec.eps, dec.K_eps, dec.K_lift = a, b, eps, K, Kl
    dec.constants_log = logd
    return a, b, K


# ---------------------------------------------------------------------------
# lifting checks
# ---------------------------------------------------------------------------

def characteristic_projection_of_ell(sys: LinearDDE, ellipse: Ellipse, y, grid: Grid, m=256, max_nodes=16384,
                                    rtol=1e-13):
    """(1/2 pi i) contour integral of j(e^{lam theta} Delta(lam)^{-1} y): P^{sun-star} l(y), independently.

    The trapezoid rule is refined by doubling until two successive results agree; eccentric
    ellipses around tall eigenvalue clusters can need thousands of nodes.
    """
    theta = grid.nodes
    y = np.asarray(y, dtype=complex)

    def quad(k):
        lam, dl = ellipse.nodes(k)
        acc = np.zeros((grid.N + 1, sys.n), dtype=complex)
        for z, d in zip(lam, dl):
            c = np.linalg.solve(sys.char_matrix(z), y)
            acc += np.exp(z * theta)[:, None] * c[None, :] * d
        return (acc / (2j * np.pi)).real

    tail = quad(m)
    while m < max_nodes:
        m *= 2
        finer = quad(m)
        done = np.max(np.abs(finer - tail)) <= rtol * max(1.0, np.max(np.abs(finer)))
        tail = finer
        if done:
            break
    return SunStarElement(grid, tail[-1], tail)


def lift_checks(sys: LinearDDE, dec: SpectralDecomposition, probes=8, seed=0, tol=1e-6,
               raise_on_failure=True):
    rng = np.random.default_rng(seed)
    grid = dec.grid
    out = {}
    # (a) biorthonormality of real coordinates against the real basis
    worst = 0.0
    for sub in (dec.center, dec.unstable):
        for k in range(sub.dim):
            z = np.eye(sub.dim)[k]
            c = sub.coords(sub.segment(z, grid))
            worst = max(worst, float(np.max(np.abs(c - z))))
    out["biorthonormality_defect"] = worst
    if raise_on_failure and worst > tol:
        raise BiorthogonalityFailure(f"biorthonormality defect {worst:.3e} > {tol:g}")
    # (b) eigen-representation vs contour projector on j(phi)
    dif = 0.0
    for phi in _probe_segments(grid, sys.n, rng, probes):
        for sub, P in ((dec.center, dec.P0), (dec.unstable, dec.Pp)):
            if sub.dim == 0:
                continue
            lifted = dec.lift_star(SunStarElement(grid, phi.values[-1], phi.values, phi.evaluate),
                                   "center" if sub is dec.center else "unstable")
            via_contour = (P @ phi.values.reshape(-1)).reshape(grid.N + 1, sys.n)
            dif = max(dif, float(np.max(np.abs(lifted.tail - via_contour))) / max(1.0, phi.norm()))
    out["eigen_vs_contour"] = dif
    # (c) lifted projections of l(y) are in jX, and agree with the characteristic-resolvent contour
    jres, agree = 0.0, 0.0
    half = 0.5 * min(-dec.gamma_minus, dec.gamma_plus)
    for _ in range(probes):
        y = rng.standard_normal(sys.n)
        for sub, which in ((dec.center, "center"), (dec.unstable, "unstable")):
            if sub.dim == 0:
                continue
            x = dec.lift_star(ell(y, grid), which)
            jres = max(jres, in_jX_residual(x))
            lams = [p.lam for p in sub.pairs] + [p.lam.conjugate() for p in sub.pairs if p.lam.imag]
            win = (-half, half) if which == "center" else (0.5 * dec.gamma_plus, max(l.real for l in lams) + 1.0)
            ref = characteristic_projection_of_ell(sys, ellipse_around(lams, win), y, grid)
            agree = max(agree, float(np.max(np.abs(ref.tail - x.tail))), float(np.linalg.norm(ref.head - x.head)))
    out["lifted_ell_jX_residual"] = jres
    out["lifted_ell_vs_characteristic"] = agree
    return out


def projector_checks(dec: SpectralDecomposition, times=(0.3, 1.0, 2.5), probes=4, seed=0):
    """Idempotency, mutual annihilation, completeness, realness and commutation with T(t) on the grid."""
    from .checks import Check

    P = {"P0": dec.P0, "P+": dec.Pp, "P-": dec.Pm}
    I = np.eye(dec.P0.shape[0])
    idem = max(float(np.max(np.abs(M @ M - M))) for M in P.values())
    cross = max(float(np.max(np.abs(P[a] @ P[b]))) for a in P for b in P if a != b)
    total = float(np.max(np.abs(dec.P0 + dec.Pp + dec.Pm - I)))
    imag = max([r.imag_residual for r in dec.contour_info.values()], default=0.0)
    A = dec.sys.generator_matrix(dec.grid)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A.shape[0], probes))
    comm = 0.0
    for t in times:
        E = expm(A * t)
        for M in P.values():
            d = M @ (E @ X) - E @ (M @ X)
            comm = max(comm, float(np.max(np.abs(d)) / max(1.0, np.max(np.abs(E @ X)))))
    return [Check("projector idempotency max|P^2 - P|", idem, 1e-8),
            Check("projector annihilation max|P_s P_r|", cross, 1e-8),
            Check("projector completeness max|P- + P0 + P+ - I|", total, 1e-12),
            Check("projector realness (imaginary part)", imag, 1e-10),
            Check("commutation |P T(t) - T(t) P|", comm, 1e-7)]
