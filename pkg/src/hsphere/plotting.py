"""Report figures (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_trace(path, energies, grad_norms, title="solve"):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    it = np.arange(len(energies))
    a1.plot(it, energies, marker=".")
    a1.set_xlabel("iteration")
    a1.set_ylabel("energy")
    a2.semilogy(it, np.maximum(grad_norms, 1e-300), marker=".")
    a2.set_xlabel("iteration")
    a2.set_ylabel("|gradient| (mass norm)")
    fig.suptitle(title)
    return _save(fig, path)


def plot_sweepout(path, ts, energies_before, energies_after=None, floor=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(ts, energies_before, marker="o", ms=3, label="initial family")
    if energies_after is not None:
        ax.plot(ts, energies_after, marker="o", ms=3, label="relaxed family")
    if floor is not None:
        ax.axhline(floor, color="grey", ls="--", lw=0.8, label="Area/2")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    return _save(fig, path)


def plot_spectrum(path, eigenvalues, tol_eig, title="lowest eigenvalues"):
    w = np.asarray(eigenvalues)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    colors = np.where(w < -tol_eig, "tab:red", np.where(np.abs(w) <= tol_eig, "tab:grey", "tab:blue"))
    ax.scatter(np.arange(len(w)), w, c=list(colors), s=14)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("k")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    return _save(fig, path)


def plot_pohozaev(path, radii, boundary, weighted):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.semilogy(radii, np.maximum(boundary, 1e-300), marker="o", label="boundary identity")
    ax.semilogy(radii, np.maximum(weighted, 1e-300), marker="s", label="weighted identity")
    ax.set_xlabel("geodesic radius")
    ax.set_ylabel("|residual|")
    ax.legend()
    return _save(fig, path)


def plot_scan(path, rows):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    alphas = sorted({r["alpha"] for r in rows})
    for a in alphas:
        sub = [r for r in rows if r["alpha"] == a]
        ax.plot([r["lambda"] for r in sub], [r["ratio"] for r in sub], marker="o", label=f"alpha={a:g}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("width / lambda")
    ax.legend()
    return _save(fig, path)


def plot_continuation(path, stages):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    al = np.array([s["alpha"] for s in stages])
    a1.plot(al - 1.0, [s["alpha_energy"] for s in stages], marker="o")
    a1.set_xscale("log")
    a1.set_xlabel("alpha - 1")
    a1.set_ylabel("alpha energy")
    a2.plot(al - 1.0, [len(s["bubbles"]) for s in stages], marker="o", drawstyle="steps-mid")
    a2.set_xscale("log")
    a2.set_xlabel("alpha - 1")
    a2.set_ylabel("concentration events")
    return _save(fig, path)


def plot_state(path, mesh, u, title="image"):
    """Image of the first three map coordinates, faces colored by energy density."""
    from mpl_toolkits.mplot3d.art3d import Poly3DCollection

    u = np.asarray(u, float)
    y = u[:, :3] if u.shape[1] >= 3 else np.column_stack([u, np.zeros((len(u), 3 - u.shape[1]))])
    dens = mesh.energy_density(u)
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    cmap = plt.get_cmap("viridis")
    span = np.ptp(dens)
    col = cmap((dens - dens.min()) / span if span > 0 else np.zeros_like(dens))
    ax.add_collection3d(Poly3DCollection(y[mesh.triangles], facecolors=col, edgecolors="none", alpha=0.9))
    lo, hi = y.min(axis=0), y.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * max(float(np.max(hi - lo)), 1e-9)
    for setter, m in zip((ax.set_xlim, ax.set_ylim, ax.set_zlim), mid):
        setter(m - half, m + half)
    ax.set_title(title)
    return _save(fig, path)
