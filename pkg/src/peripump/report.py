"""Figure rendering for the CLI report path.

Every command that writes delimited output also renders a matplotlib
figure next to it; figures are plain PNG files, no interactive backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .particle import boundary_nodes

__all__ = ["geometry_figure", "trajectory_figure", "gradient_figure",
           "history_figure"]


def _wall_outline(shape, n=400):
    ts = np.linspace(0, 2 * np.pi, n)
    return {s: shape.point(s, ts) for s in "+-"}


def geometry_figure(path: Path, shape, particle=None, configs=None, title=""):
    fig, ax = plt.subplots(figsize=(7.5, 3.2))
    walls = _wall_outline(shape)
    for s, xy in walls.items():
        ax.plot(xy[:, 0], xy[:, 1], "k-", lw=1.4)
    if particle is not None and configs:
        q = np.linspace(0, 2 * np.pi, 200)
        first, last = configs[0], configs[-1]
        bd = boundary_nodes(particle, first, q)
        ax.plot(bd.x[:, 0], bd.x[:, 1], "b--", lw=1.0, label="initial")
        bd = boundary_nodes(particle, last, q)
        ax.plot(bd.x[:, 0], bd.x[:, 1], "r-", lw=1.2, label="final")
        cs = np.array([c.c for c in configs])
        ax.plot(cs[:, 0], cs[:, 1], "g.-", ms=3, lw=0.8, label="centroid")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def trajectory_figure(path: Path, times, configs, velocities):
    cs = np.array([c.c for c in configs])
    ws = np.array([v.w for v in velocities])
    rhos = np.array([v.rho for v in velocities])
    fig, axes = plt.subplots(1, 3, figsize=(11, 3))
    axes[0].plot(times, cs[:, 0], label="c1")
    axes[0].plot(times, cs[:, 1], label="c2")
    axes[0].set_title("centroid")
    axes[1].plot(times, ws[:, 0], label="w1")
    axes[1].plot(times, ws[:, 1], label="w2")
    axes[1].set_title("rigid velocity")
    axes[2].plot(times, rhos)
    axes[2].set_title("angular velocity")
    for ax in axes[:2]:
        ax.legend(fontsize=8)
    for ax in axes:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def gradient_figure(path: Path, rows):
    """rows: list of dicts with direction, functional, analytic, fd, rel_diff."""
    functionals = sorted({r["functional"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.4))
    for name in functionals:
        sel = [r for r in rows if r["functional"] == name]
        idx = [r["direction"] for r in sel]
        axes[0].semilogy(idx, np.abs([r["analytic"] for r in sel]), "o-",
                         ms=3, label=f"{name} (adjoint)")
        axes[0].semilogy(idx, np.abs([r["fd"] for r in sel]), "x--", ms=4,
                         label=f"{name} (FD)")
        axes[1].semilogy(idx, [max(r["rel_diff"], 1e-16) for r in sel], "o-",
                         ms=3, label=name)
    axes[0].set_xlabel("perturbation index")
    axes[0].set_ylabel("|derivative|")
    axes[1].set_xlabel("perturbation index")
    axes[1].set_ylabel("relative difference")
    for ax in axes:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def history_figure(path: Path, rows, restarts=()):
    """rows: per accepted iterate dicts with J, C_V, C_D, sigma."""
    it = np.arange(len(rows))
    J = [r["J"] for r in rows]
    CV = [abs(r["C_V"]) for r in rows]
    CD = [abs(r["C_D"]) for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3))
    axes[0].semilogy(it, np.maximum(J, 1e-16))
    axes[0].set_title("dissipation")
    axes[1].semilogy(it, np.maximum(CV, 1e-16), label="|C_V|")
    axes[1].semilogy(it, np.maximum(CD, 1e-16), label="|C_D|")
    axes[1].legend(fontsize=8)
    axes[1].set_title("constraints")
    axes[2].semilogy(it, [r["sigma"] for r in rows])
    axes[2].set_title("penalty")
    for ax in axes:
        ax.set_xlabel("accepted iterate")
        for r in restarts:
            ax.axvline(r, color="k", ls=":", lw=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
