"""Matplotlib figures for sweep reports (written to files, never shown)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.tri import Triangulation  # noqa: E402


def _ok_rows(report):
    return [r for r in report.rows if r["status"] == "ok"]


def convergence_figure(report, path) -> Path:
    rows = _ok_rows(report)
    eps = np.array([r["epsilon"] for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(eps, [r["e_l2_meas"] for r in rows], "o-", label=r"$L^2$ error (measured $\mu$)")
    ax.loglog(eps, [r["e_l2_ana"] for r in rows], "s--", label=r"$L^2$ error (analytic $\mu$)")
    for j in range(len(rows[0]["p_meas"]) if rows else 0):
        vals = np.abs([r["p_meas"][j] for r in rows])
        if np.all(vals > 0):
            ax.loglog(eps, vals, ".:", label=f"$|p_{j + 1}|$")
    ax.set_xlabel(r"$\varepsilon$")
    ax.invert_xaxis()
    ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def mu_figure(report, path) -> Path:
    rows = [r for r in _ok_rows(report) if math.isfinite(r["mu_deviation"])]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.plot([r["epsilon"] for r in rows], [r["mu_interior"] for r in rows], "o-", label=r"interior $\mu^\varepsilon$")
    ax.axhline(report.mu_analytic, color="k", lw=0.8, ls="--", label=r"analytic $\mu$")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("density")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def field_figure(mesh, values, path, title="") -> Path:
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    tc = ax.tripcolor(tri, values, shading="gouraud", cmap="viridis")
    fig.colorbar(tc, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(report, out_dir) -> list:
    out = Path(out_dir)
    paths = []
    if _ok_rows(report):
        paths.append(convergence_figure(report, out / "convergence.png"))
        paths.append(mu_figure(report, out / "mu_density.png"))
    done = [c for c in report.cases if c is not None]
    if done:
        c = done[-1]
        paths.append(field_figure(c.mesh, c.u, out / "solution.png", f"u, eps = {c.epsilon:.4g}"))
        paths.append(field_figure(c.mesh, c.w, out / "corrector.png", f"w, eps = {c.epsilon:.4g}"))
    return paths
