"""Figure rendering (headless): convergence plots and solution snapshots.

Everything here draws to an in-memory figure and writes PNG files; no
display is required or used.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

__all__ = [
    "convergence_figure",
    "save_convergence_figure",
    "control_solution_figure",
    "save_control_solution_figure",
]


def convergence_figure(table, title=None):
    """Log-log errors versus h*sqrt(2), one line per metric.

    Dashed guides anchored at each metric's finest point show the
    expected theoretical slope; metrics with nonpositive entries (e.g.
    exactly reproduced data) are skipped.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    h = np.array([row.h_sqrt2 for row in table.rows])
    drew = False
    for name, rate in zip(table.columns, table.theory):
        errs = np.array(table.column(name))
        if not np.all(errs > 0.0):
            continue
        (line,) = ax.loglog(h, errs, "o-", label=name)
        drew = True
        if rate == rate:  # skip metrics without a claimed rate
            guide = errs[-1] * (h / h[-1]) ** rate
            ax.loglog(h, guide, "--", color=line.get_color(), alpha=0.45, lw=1.0)
            ax.annotate(
                f"slope {rate:.2g}",
                (h[0], guide[0]),
                textcoords="offset points",
                xytext=(4, 2),
                fontsize=8,
                color=line.get_color(),
                alpha=0.8,
            )
    ax.set_xlabel(r"$h\,\sqrt{2}$")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.25)
    if drew:
        ax.legend(fontsize=9)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def save_convergence_figure(table, path, title=None) -> None:
    fig = convergence_figure(table, title=title)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def control_solution_figure(mesh, solution, title=None):
    """State and adjoint fields plus the control along the boundary."""
    fig, axes = plt.subplots(1, 3, figsize=(13.5, 4.2))
    tri = mtri.Triangulation(
        mesh.node_coords[:, 0], mesh.node_coords[:, 1], mesh.triangles
    )
    for ax, field, label in (
        (axes[0], solution.u_h, "state"),
        (axes[1], solution.p_h, "adjoint"),
    ):
        shade = ax.tripcolor(tri, field.values, shading="gouraud")
        fig.colorbar(shade, ax=ax, shrink=0.9)
        ax.set_aspect("equal")
        ax.set_title(label)

    # control along the boundary chain, parametrized by arclength
    chain = mesh.boundary_edges[:, 0]
    pts = mesh.node_coords[chain]
    seg = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    z_chain = solution.z_h.values[mesh.boundary_index[chain]]
    axes[2].plot(s, np.concatenate([z_chain, z_chain[:1]]), "-")
    axes[2].set_xlabel("boundary arclength")
    axes[2].set_title("control")
    axes[2].grid(alpha=0.25)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def save_control_solution_figure(mesh, solution, path, title=None) -> None:
    fig = control_solution_figure(mesh, solution, title=title)
    fig.savefig(path, dpi=150)
    plt.close(fig)
