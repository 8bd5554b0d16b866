"""Scenario analyses behind the command-line subcommands.

Each analysis returns an ``Outcome``: a report section (plain data plus
value/threshold checks) and the tables destined for CSV files.  Wall-clock
timings are kept apart so that report.json depends only on config and seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .admissibility import admissibility_report, constant_forcing_check, suncross_membership
from .center_manifold import (build_model, cm_map, convergence_study, invariance_residual, lipschitz_pairs,
                              model_checks, reduced_linear_part, sample_phi0, tangency_fit)
from .checks import Check
from .config import ScenarioConfig
from .errors import ConfigError
from .grid import Grid
from .semiflow import linearization_order_check, semiflow_solution, split_G
from .semigroup import fit_semigroup_bound, solve
from .spectral import build_decomposition, lift_checks, projector_checks
from .state import HistorySegment, ell
from .verify import admissibility_pairs, random_forcing_sample, run_suite

log = logging.getLogger(__name__)


@dataclass
class Outcome:
    section: dict
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, tuple] = field(default_factory=dict)
    seconds: float = 0.0


class Context:
    """Shared state across the analyses of one run (decomposition built once)."""

    def __init__(self, cfg: ScenarioConfig, seed: int, threads: int = 1):
        self.cfg = cfg
        self.seed = seed
        self.threads = threads
        self.grid = cfg.grid
        if cfg.nonlinear is not None:
            self.lin, self.R = split_G(cfg.nonlinear)
        else:
            self.lin, self.R = cfg.linear, None
        self._dec = {}

    def decomposition(self, constants=True):
        if constants in self._dec:
            return self._dec[constants]
        if not constants and True in self._dec:
            return self._dec[True]
        cfg = self.cfg
        sp, tr = cfg.section("spectrum"), cfg.section("trichotomy")
        dec = build_decomposition(self.lin, self.grid, gap=cfg.section("decomposition")["gap"],
                                  region=_region(sp["region"]), eps=tr["epsilon"], constants=constants,
                                  seed=self.seed, t_max=tr["t_max"])
        self._dec[constants] = dec
        return dec


def _region(r):
    if r is None:
        return None
    return tuple(float(v) for v in r)


def _lam_record(p):
    return {"re": p.lam.real, "im": p.lam.imag, "residual": max(p.residual_right, p.residual_left)}


# ---------------------------------------------------------------------------

def spectrum(ctx: Context) -> Outcome:
    dec = ctx.decomposition(constants=False)
    pairs = dec.eigenpairs
    res = max(max(p.residual_right, p.residual_left) for p in pairs)
    checks = [Check("Newton residual of eigenpairs", res, 1e-10)]
    checks += projector_checks(dec, seed=ctx.seed)
    cls = [0 if p in dec.center.pairs else (1 if p in dec.unstable.pairs else -1) for p in pairs]
    section = {
        "eigenvalues": [_lam_record(p) for p in pairs],
        "dim_center": dec.center.dim,
        "dim_unstable": dec.unstable.dim,
        "gamma_minus": dec.gamma_minus,
        "gamma_plus": dec.gamma_plus,
        "Lambda0": dec.center.Lambda,
        "checks": checks,
    }
    rows = [(p.lam.real, p.lam.imag, float(c)) for p, c in zip(pairs, cls)]
    return Outcome(section, checks, {"plotdata/eigenvalues.csv": (["re", "im", "class"], rows)})


def trichotomy_curves(dec, ts, probes=6, seed=0):
    """Worst normalized log-norms of the three flows against the fitted bounds."""
    from .semigroup import _probe_segments

    grid, sys = dec.grid, dec.sys
    rng = np.random.default_rng(seed)
    th = np.linspace(-sys.h, 0.0, 81)
    stable = np.full(len(ts), -np.inf)
    for phi in _probe_segments(grid, sys.n, rng, probes):
        pm = dec.Pm_segment(phi)
        n0 = pm.norm()
        if n0 < 1e-12:
            continue
        sol = solve(sys, pm, ts[-1], rtol=1e-10, atol=1e-13)
        nv = np.max(np.linalg.norm(sol.node_values(ts, grid), axis=2), axis=1) / n0
        stable = np.maximum(stable, np.log(np.maximum(nv, 1e-300)))

    def flow_curve(sub, times):
        if sub.dim == 0:
            return np.full(len(times), np.nan)
        Phi = sub.basis(th)
        Z = np.eye(sub.dim)
        n0 = np.max(np.linalg.norm(np.einsum("knd,dz->zkn", Phi, Z), axis=-1), axis=1)
        out = []
        for t in times:
            V = np.einsum("knd,dz->zkn", Phi, sub.flow(t) @ Z)
            out.append(np.log(np.max(np.max(np.linalg.norm(V, axis=-1), axis=1) / n0)))
        return np.array(out)

    center_fwd = flow_curve(dec.center, ts)
    center_bwd = flow_curve(dec.center, -ts)
    unstable_bwd = flow_curve(dec.unstable, -ts)
    lk = np.log(dec.K_eps)
    return {
        "t": ts,
        "log_stable": stable,
        "log_stable_bound": lk + dec.a * ts,
        "log_center_forward": center_fwd,
        "log_center_backward": center_bwd,
        "log_center_bound": lk + dec.eps * ts,
        "log_unstable_backward": unstable_bwd,
        "log_unstable_bound": lk - dec.b * ts,
    }


def trichotomy(ctx: Context) -> Outcome:
    dec = ctx.decomposition(constants=True)
    lg = dec.constants_log
    lead = complex(lg["leading_stable"])
    checks = [Check("fitted K_eps", dec.K_eps, 1e3),
              Check("K for lifted l(y) inputs", dec.K_lift, 1e3),
              Check("|stable slope - leading stable Re lambda|", abs(lg["stable_slope"] - lead.real), 0.05)]
    lift = lift_checks(dec.sys, dec, seed=ctx.seed, raise_on_failure=False)
    checks += [Check("biorthonormality defect", lift["biorthonormality_defect"], 1e-6),
               Check("eigen-representation vs contour projector", lift["eigen_vs_contour"], 1e-7)]
    if dec.center.dim + dec.unstable.dim:
        checks += [Check("lifted P(l y) jX residual", lift["lifted_ell_jX_residual"], 1e-6),
                   Check("lifted P(l y) vs characteristic contour", lift["lifted_ell_vs_characteristic"], 1e-6)]
    t_max = float(lg["t_max"])
    ts = np.linspace(0.0, t_max, 241)
    curves = trichotomy_curves(dec, ts, seed=ctx.seed)
    # the fitted bounds must dominate the sampled curves
    margin = max(float(np.nanmax(curves["log_stable"] - curves["log_stable_bound"])),
                 float(np.nanmax(np.nan_to_num(curves["log_center_forward"] - curves["log_center_bound"],
                                               nan=-np.inf))),
                 float(np.nanmax(np.nan_to_num(curves["log_center_backward"] - curves["log_center_bound"],
                                               nan=-np.inf))),
                 float(np.nanmax(np.nan_to_num(curves["log_unstable_backward"] - curves["log_unstable_bound"],
                                               nan=-np.inf))))
    checks.append(Check("max log(||T(t) phi|| / bound) on held-out probes", margin, 1e-6))
    section = {"a": dec.a, "b": dec.b, "epsilon": dec.eps, "K_eps": dec.K_eps, "K_lift": dec.K_lift,
               "stable_slope": lg["stable_slope"], "leading_stable": lead,
               "K_parts": {k: lg[k] for k in ("K_center", "K_unstable", "K_stable")}, "checks": checks}
    header = list(curves)
    rows = list(zip(*[curves[k] for k in header]))
    return Outcome(section, checks, {"plotdata/trichotomy_lognorm.csv": (header, rows)})


def admissibility(ctx: Context) -> Outcome:
    cfg = ctx.cfg
    sec = cfg.section("admissibility")
    sys, grid = ctx.lin, ctx.grid
    rng = np.random.default_rng(ctx.seed)
    pairs = admissibility_pairs(int(sec["pairs"]))
    t_max = max(t for t, _ in pairs)
    kinds = ("ell", "j", "mixed")
    samples = [random_forcing_sample(sys, grid, rng, kinds[i % 3], t_max, f"{kinds[i % 3]}-{i}")
               for i in range(int(sec["forcings"]))]
    rep = admissibility_report(sys, samples, pairs, grid)
    checks = list(rep["checks"])
    y = np.eye(sys.n)[0]
    checks.append(Check("constant l(e1) forcing stays in jX", constant_forcing_check(sys, ell(y, grid), (0.0, 2.0),
                                                                                     grid), 1e-6))
    bound = fit_semigroup_bound(sys, True)
    memb = []
    for lam in (max(bound.omega, 0.0) + 1.0, max(bound.omega, 0.0) + 2.0):
        _, r = suncross_membership(sys, ell(y, grid), lam, bound=bound)
        memb.append({"lambda": lam, "residual": r})
    checks.append(Check("resolvent membership residual of l(e1)", max(m["residual"] for m in memb), 1e-6))
    section = {"forcings": len(samples), "pairs": [list(p) for p in pairs], "max_residual": rep["max_residual"],
               "membership": memb, "checks": checks}
    rows = [(r["t"], r["s"], r["residual"]) for r in rep["rows"]]
    return Outcome(section, checks, {"plotdata/admissibility_residuals.csv": (["t", "s", "residual"], rows)})


def _history(spec, grid: Grid, n, dec=None):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        v = spec.get("value")
        c = np.full(n, 0.1) if v is None else np.asarray(v, dtype=float).reshape(n)
        return HistorySegment.constant(grid, c)
    if kind == "trig":
        amp = np.asarray(spec.get("amplitude", [0.1] * n), dtype=float).reshape(n)
        om = float(spec.get("omega", np.pi / 2))
        return HistorySegment.from_function(grid, lambda th: np.outer(np.cos(om * th), amp))
    if kind == "center":
        if dec is None or dec.center.dim == 0:
            raise ConfigError("'center' history needs a nontrivial center subspace")
        return dec.center.segment(np.asarray(spec.get("coords", [0.1] * dec.center.dim), dtype=float), grid)
    raise ConfigError(f"unknown history kind '{kind}'")


def simulate(ctx: Context) -> Outcome:
    from .errors import ConfigError

    cfg = ctx.cfg
    sec = cfg.section("simulate")
    num = cfg.section("numerics")
    n, grid = ctx.lin.n, ctx.grid
    dec = ctx.decomposition(constants=False) if sec["history"].get("kind") == "center" else None
    try:
        phi = _history(sec["history"], grid, n, dec)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"simulate.history: {e}") from e
    T = float(sec["t_end"])
    ts = np.linspace(0.0, T, int(sec["samples"]))
    lin_sol = solve(ctx.lin, phi, T, rtol=num["rtol"], atol=num["atol"])
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    checks = []
    section = {"t_end": T, "history": sec["history"]}
    if cfg.nonlinear is not None:
        sol = semiflow_solution(cfg.nonlinear, T, phi, rtol=num["rtol"], atol=num["atol"])
        X = sol(ts)
        XL = lin_sol(ts)
        header += [f"linear_x{i + 1}" for i in range(n)]
        rows = [tuple([t, *x, *xl]) for t, x, xl in zip(ts, X, XL)]
        if sec["linearization"]:
            p, radii, errs = linearization_order_check(cfg.nonlinear, 3.0, seed=ctx.seed)
            checks.append(Check("linearization remainder exponent p", p, 1.9, ">="))
            section["linearization"] = {"radii": radii, "errors": errs, "p": p}
    else:
        X = lin_sol(ts)
        rows = [tuple([t, *x]) for t, x in zip(ts, X)]
    section["final_state"] = X[-1]
    section["sup_norm"] = float(np.max(np.linalg.norm(X, axis=1)))
    section["checks"] = checks
    return Outcome(section, checks, {"trajectories.csv": (header, rows)})


def center_manifold(ctx: Context) -> Outcome:
    cfg = ctx.cfg
    sec = cfg.section("center_manifold")
    num = cfg.section("numerics")
    dec = ctx.decomposition(constants=True)
    model = build_model(cfg.nonlinear, dec, eta=sec["eta"], T=sec["T_inf"], dt=sec["dt"], grid=ctx.grid,
                        delta=sec["delta"], order=int(sec["cutoff_order"]), tol=num["truncation_tol"],
                        seed=ctx.seed)
    checks = list(model_checks(model))
    phis = sample_phi0(model, tuple(sec["radii"]), int(sec["angles"]))
    cm_map(model, phis, threads=ctx.threads)
    checks.append(Check("observed contraction factor", max(s["max_factor"] for s in model.samples), 0.55))
    zero = [s for s in model.samples if not np.any(s["phi0"])]
    if zero:
        checks.append(Check("||u*(0)|| for phi0 = 0", float(np.max(np.abs(zero[0]["values"]))), 1e-14))
    w, bound, npairs = lipschitz_pairs(model, int(sec["lipschitz_pairs"]), seed=ctx.seed)
    checks.append(Check("Lipschitz ratio vs 2 K_eps", w, bound))
    p, C, rs, errs = tangency_fit(model)
    checks.append(Check("tangency exponent p", p, 1.9, ">="))
    J, ev = reduced_linear_part(model)
    crit = sorted(abs(q.lam.imag) for q in dec.center.pairs)
    freq = float(np.max(np.abs(ev.imag))) if len(ev) else 0.0
    if crit:
        checks.append(Check("reduced rotation frequency error", abs(freq - crit[-1]), 1e-6))
    section = {"model": {k: v for k, v in model.to_dict().items() if k not in ("samples", "theta_nodes")},
               "tuning": {"delta": model.tuning.delta, "K_norm": model.tuning.K_norm,
                          "L_R_delta": model.tuning.L_R_delta, "product": model.tuning.product},
               "tangency": {"p": p, "C": C, "radii": rs, "errors": errs},
               "reduced_linear_part": J, "reduced_eigenvalues": ev, "lipschitz_pairs": npairs}
    probe = sample_phi0(model, (0.5,), 1)[1]
    if sec["convergence_study"]:
        study = convergence_study(model, probe)
        for k, v in study.items():
            checks.append(Check(f"convergence study: change under {k} refinement", v["change"], 1e-4))
        section["convergence"] = {k: v["change"] for k, v in study.items()}
    if sec["invariance"]:
        absr, rel, rows = invariance_residual(model, probe, tuple(sec["t_span"]))
        checks.append(Check("invariance residual (relative)", rel, 1e-4))
        section["invariance"] = {"absolute": absr, "relative": rel, "rows": rows}
    section["checks"] = checks
    th = ctx.grid.nodes
    n, d = ctx.lin.n, dec.center.dim
    sample_rows = []
    for i, s in enumerate(model.samples):
        for k, t in enumerate(th):
            sample_rows.append(tuple([i, *s["phi0"], t, *s["values"][k]]))
    sample_header = ["sample"] + [f"z{j + 1}" for j in range(d)] + ["theta"] + [f"x{j + 1}" for j in range(n)]
    tables = {"manifold_samples.csv": (sample_header, sample_rows),
              "plotdata/manifold_sections.csv": _sections(model)}
    if sec["invariance"]:
        tables["plotdata/invariance.csv"] = (["t", "distance", "tangent_distance", "norm"],
                                             [(r["t"], r["distance"], r["tangent_distance"], r["norm"])
                                              for r in section["invariance"]["rows"]])
    return Outcome(section, checks, tables)


def _sections(model, points=9):
    """C(z e_1)(theta) and its tangent part along the first center coordinate."""
    c = model.dec.center
    h = model.lin.h
    th = np.array([0.0, -0.5 * h, -h])
    thf = np.linspace(-h, 0, 81)
    e = np.zeros(c.dim)
    e[0] = 1.0
    e /= np.max(np.linalg.norm(c.basis(thf) @ e, axis=1))
    rows = []
    for z in np.linspace(-0.5, 0.5, points) * model.delta:
        seg = model.C(z * e).C_segment()
        vals = seg.evaluate(th)[:, 0]
        tan = (c.basis(th) @ (z * e))[:, 0]
        dev = float(np.max(np.linalg.norm(seg.evaluate(thf) - c.basis(thf) @ (z * e), axis=1)))
        rows.append((z, *vals, *tan, dev))
    header = ["z1", "C_theta0", "C_theta_mid", "C_theta_minus_h", "tangent_theta0", "tangent_theta_mid",
              "tangent_theta_minus_h", "deviation"]
    return header, rows


def verify(ctx: Context, level: Optional[str] = None) -> Outcome:
    sec = ctx.cfg.section("verify")
    level = level or sec["level"]
    rep = run_suite(level, ctx.seed, faults=sec["faults"] or None, only=sec["criteria"])
    checks = [c for r in rep.criteria for c in r.checks]
    runtime = [c for r in rep.criteria for c in r.runtime]
    section = {"level": level, "faults": sec["faults"],
               "criteria": [{"number": r.number, "title": r.title, "checks": r.checks,
                             "failed": Check("failed checks", len([c for c in r.checks if not c.passed]), 0, "==")}
                            for r in rep.criteria]}
    out = Outcome(section, checks)
    out.runtime = runtime
    out.lines = [line for r in rep.criteria for line in r.lines()]
    return out


ANALYSES = {
    "spectrum": spectrum,
    "trichotomy": trichotomy,
    "admissibility": admissibility,
    "simulate": simulate,
    "center-manifold": center_manifold,
    "verify": verify,
}


def run_analysis(name, ctx: Context, **kw) -> Outcome:
    t0 = time.perf_counter()
    out = ANALYSES[name](ctx, **kw)
    out.seconds = time.perf_counter() - t0
    log.info("%s finished in %.2f s", name, out.seconds)
    return out
