"""Report figures written to image files (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

NORM_LABELS = {
    "psi_l2": r"$\|\psi\|_{L^2}$",
    "grad_psi_l2": r"$\|\nabla\psi\|_{L^2}$",
    "u_l2": r"$\|u\|_{L^2}$",
    "u_h1": r"$\|u\|_{H^1}$",
    "phi_half": r"$\|\phi\|_{1/2}$",
    "lambda_mhalf": r"$\|\lambda\|_{-1/2}$",
}


def plot_norms(norms: dict, path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    groups = (("psi_l2", "grad_psi_l2"), ("u_l2", "u_h1"), ("phi_half", "lambda_mhalf"))
    for ax, keys in zip(axes, groups):
        for k in keys:
            ax.plot(norms["t"], norms[k], label=NORM_LABELS[k])
        ax.set_xlabel("t")
        ax.legend()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_receivers(times, signals, path, title="total acoustic field") -> Path:
    n = signals.shape[1]
    fig, axes = plt.subplots(n, 1, figsize=(8, 1.1 * n + 1), sharex=True, squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(times, signals[:, i], lw=0.9)
        ax.set_ylabel(f"r{i}", rotation=0, labelpad=12)
        ax.grid(alpha=0.3)
    axes[0, 0].set_title(title)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_setup(mesh, receivers, path, incident=None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    v = mesh.vertices
    ax.triplot(v[:, 0], v[:, 1], mesh.triangles, lw=0.3, color="0.6")
    for (a, b), lab in zip(mesh.panels, mesh.panel_labels):
        ax.plot(v[[a, b], 0], v[[a, b], 1], color="C3" if lab == 1 else "C0", lw=1.5)
    if len(receivers):
        ax.plot(receivers[:, 0], receivers[:, 1], "k.", ms=8)
        for i, p in enumerate(receivers):
            ax.annotate(f"r{i}", p, textcoords="offset points", xytext=(4, 4), fontsize=8)
    if incident is not None and not incident.is_zero:
        d = incident.d
        o = np.asarray(incident.origin)
        perp = np.array([-d[1], d[0]])
        line = o[None] + np.linspace(-2, 2, 2)[:, None] * perp[None]
        ax.plot(line[:, 0], line[:, 1], "k:", lw=1)
        ax.annotate("", o + 0.4 * d, o, arrowprops=dict(arrowstyle="->"))
    ax.set_aspect("equal")
    ax.set_title("geometry (red: Dirichlet) and receivers")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_snapshot(frame, shape, path) -> Path:
    ny, nx = shape
    X = frame.x.reshape(ny, nx)
    Y = frame.y.reshape(ny, nx)
    fig, ax = plt.subplots(figsize=(5.5, 4.6))
    ac = np.ma.masked_invalid(frame.acoustic.reshape(ny, nx))
    um = np.ma.masked_invalid(frame.u_magnitude.reshape(ny, nx))
    lim = float(np.nanmax(np.abs(frame.acoustic))) if np.any(np.isfinite(frame.acoustic)) else 1.0
    m1 = ax.pcolormesh(X, Y, ac, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="auto")
    m2 = ax.pcolormesh(X, Y, um, cmap="viridis", shading="auto")
    fig.colorbar(m1, ax=ax, fraction=0.046, label="acoustic")
    fig.colorbar(m2, ax=ax, fraction=0.046, label="|u|")
    ax.set_aspect("equal")
    ax.set_title(f"t = {frame.t:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_rates(table: list[dict], path, xkey="step", ykey="error") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    x = [r[xkey] for r in table]
    y = [r[ykey] for r in table]
    ax.loglog(x, y, "o-")
    ax.set_xlabel(xkey)
    ax.set_ylabel(ykey)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
