"""PNG figures from the plot-data tables (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5) - 1) / 2
STYLE = {
    "figure.figsize": (5.0, 5.0 * GOLDEN),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.bbox": "tight",
}
CLASS_COLORS = {-1: "#2b8cbe", 0: "#d7301f", 1: "#fdae61"}


def _table(header, rows):
    return {k: np.array([r[i] for r in rows], dtype=float) for i, k in enumerate(header)}


def _save(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # no version string, so identical data give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def eigenvalue_scatter(header, rows, path):
    d = _table(header, rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for cls, label in ((-1, "stable"), (0, "center"), (1, "unstable")):
            m = d["class"] == cls
            if m.any():
                ax.plot(d["re"][m], d["im"][m], "o", color=CLASS_COLORS[cls], label=label)
        ax.axvline(0.0, color="k", lw=0.6)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        ax.legend(loc="best")
        _save(fig, path)


def trichotomy_lognorms(header, rows, path):
    d = _table(header, rows)
    t = d["t"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, d["log_stable"], color=CLASS_COLORS[-1], label=r"stable $\log\|T(t)P_-\varphi\|$")
        ax.plot(t, d["log_stable_bound"], "--", color=CLASS_COLORS[-1], label=r"$\log K + at$")
        if np.isfinite(d["log_center_forward"]).any():
            ax.plot(t, d["log_center_forward"], color=CLASS_COLORS[0], label="center, forward")
            ax.plot(t, d["log_center_backward"], ":", color=CLASS_COLORS[0], label="center, backward")
            ax.plot(t, d["log_center_bound"], "--", color=CLASS_COLORS[0], label=r"$\log K + \varepsilon|t|$")
        if np.isfinite(d["log_unstable_backward"]).any():
            ax.plot(t, d["log_unstable_backward"], color=CLASS_COLORS[1], label="unstable, backward")
            ax.plot(t, d["log_unstable_bound"], "--", color=CLASS_COLORS[1], label=r"$\log K - b|t|$")
        ax.set_xlabel(r"$|t|$")
        ax.set_ylabel("log norm")
        ax.legend(loc="lower left", ncol=2)
        _save(fig, path)


def trajectories(header, rows, path):
    d = _table(header, rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k in header[1:]:
            ax.plot(d["t"], d[k], "--" if k.startswith("linear") else "-", label=k)
        ax.set_xlabel("t")
        ax.set_ylabel("x(t)")
        ax.legend(loc="best")
        _save(fig, path)


def manifold_sections(header, rows, path):
    d = _table(header, rows)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        for k, lab in (("theta0", r"$\theta=0$"), ("theta_mid", r"$\theta=-h/2$"), ("theta_minus_h", r"$\theta=-h$")):
            (ln,) = a1.plot(d["z1"], d["C_" + k], "o-", label=lab)
            a1.plot(d["z1"], d["tangent_" + k], "--", color=ln.get_color())
        a1.set_xlabel(r"$z_1$")
        a1.set_ylabel(r"$\mathcal{C}(z_1 e_1)(\theta)$")
        a1.legend(loc="best")
        m = d["z1"] != 0
        a2.loglog(np.abs(d["z1"][m]), np.maximum(d["deviation"][m], 1e-300), "o")
        a2.set_xlabel(r"$|z_1|$")
        a2.set_ylabel("distance from tangent space")
        fig.tight_layout()
        _save(fig, path)


def invariance(header, rows, path):
    d = _table(header, rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(d["t"], np.maximum(d["distance"], 1e-300), "o-", label="distance from manifold")
        ax.semilogy(d["t"], np.maximum(d["tangent_distance"], 1e-300), "s--", label="distance from tangent space")
        ax.set_xlabel("t")
        ax.legend(loc="best")
        _save(fig, path)


PLOTS = {
    "plotdata/eigenvalues.csv": ("eigenvalues.png", eigenvalue_scatter),
    "plotdata/trichotomy_lognorm.csv": ("trichotomy_lognorm.png", trichotomy_lognorms),
    "trajectories.csv": ("trajectories.png", trajectories),
    "plotdata/manifold_sections.csv": ("manifold_sections.png", manifold_sections),
    "plotdata/invariance.csv": ("invariance.png", invariance),
}


def render(tables, out_dir):
    """Write a PNG for every table with a registered plot; returns the file names."""
    written = []
    for key, (header, rows) in tables.items():
        if key in PLOTS and rows:
            name, fn = PLOTS[key]
            fn(header, rows, Path(out_dir) / "plots" / name)
            written.append(f"plots/{name}")
    return written
