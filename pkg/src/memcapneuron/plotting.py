"""Figure rendering for experiment and CLI artifacts.

All functions draw onto a fresh figure, save it to ``path`` (format taken
from the suffix) and close it. The non-interactive Agg backend is used so
rendering works without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# deterministic SVG output (no random ids or timestamps)
matplotlib.rcParams["svg.hashsalt"] = "memcapneuron"
matplotlib.rcParams["svg.fonttype"] = "none"

_META = {"Date": None}


def _save(fig, path) -> Path:
    path = Path(path)
    meta = _META if path.suffix.lower() in (".svg", ".pdf") else None
    fig.savefig(path, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_trace(trace, path, title: str = "", x_c: float | None = None, signals=("x", "V_C", "I_r")) -> Path:
    """Stacked time series of selected :class:`CircuitTrace` columns."""
    fig, axes = plt.subplots(len(signals), 1, sharex=True, figsize=(7, 1.8 * len(signals) + 0.6))
    axes = np.atleast_1d(axes)
    for ax, name in zip(axes, signals):
        ax.plot(trace.t, getattr(trace, name), lw=0.6)
        ax.set_ylabel(name)
        if name == "x" and x_c is not None:
            ax.axhline(x_c, color="0.5", ls="--", lw=0.6)
    axes[-1].set_xlabel("t")
    if title:
        axes[0].set_title(title)
    return _save(fig, path)


def plot_portrait(portrait, path, title: str = "") -> Path:
    """Normalised flow field, trajectory bundle and fixed points in the (x, q) plane."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.quiver(portrait.X, portrait.Q, portrait.U, portrait.W, color="0.6", angles="xy", scale=40, width=0.002)
    colours = {"sink": "tab:blue", "cycle": "tab:red", "other": "tab:gray", "failed": "k"}
    for tr in portrait.trajectories:
        if tr.ok:
            ax.plot(tr.x, tr.q, lw=0.6, color=colours.get(tr.terminal, "tab:gray"))
    for f in portrait.fixed_points:
        face = "tab:blue" if f.kind.stable else "white"
        ax.plot(f.x, f.q, "o", mfc=face, mec="k", ms=7)
    ax.set_xlabel("x")
    ax.set_ylabel("q")
    ax.set_title(title or f"V = {portrait.V:g}")
    return _save(fig, path)


def plot_curve(x, y, path, xlabel: str, ylabel: str, title: str = "", marker: str = "o") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, marker=marker, ms=3, lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_surface(V, omega, P, path, title: str = "") -> Path:
    """Spectral amplitude map: rows of ``P`` are voltages, columns frequencies."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mesh = ax.pcolormesh(omega, V, np.log10(np.maximum(P, 1e-8)), shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 P1")
    ax.set_xlabel("omega")
    ax.set_ylabel("V")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_sync_map(rows, path, title: str = "") -> Path:
    """Response class versus relative source frequency for each DC level.

    ``rows`` are ``(V_dc, omega_source / omega_natural, response_class)``.
    """
    classes = ["Harmonic", "Locked", "Quasiperiodic", "SpikeTrainLowFreq"]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    levels = sorted({r[0] for r in rows})
    for j, cls in enumerate(classes):
        pts = [(r[1], levels.index(r[0])) for r in rows if r[2] == cls]
        if pts:
            a = np.array(pts)
            ax.scatter(a[:, 0], a[:, 1], s=18, label=cls, color=f"C{j}")
    ax.set_yticks(range(len(levels)), [f"{v:g}" for v in levels])
    ax.set_xlabel("omega_source / omega_natural")
    ax.set_ylabel("V_dc")
    ax.legend(fontsize=7, loc="upper right")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_overlays(panels, path, title: str = "") -> Path:
    """Grid of drive/response overlays.

    ``panels`` is a list of rows, each a list of ``(label, t, V_drive, V_C)``.
    """
    nr, nc = len(panels), max(len(r) for r in panels)
    fig, axes = plt.subplots(nr, nc, figsize=(2.6 * nc, 1.9 * nr), squeeze=False)
    for i, row in enumerate(panels):
        for j, (label, t, vd, vc) in enumerate(row):
            ax = axes[i, j]
            ax.plot(t, vc, lw=0.6, color="tab:blue")
            ax2 = ax.twinx()
            ax2.plot(t, vd, lw=0.6, color="tab:orange")
            ax2.set_yticks([])
            ax.set_title(label, fontsize=7)
            ax.tick_params(labelsize=6)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
