"""Figures for the report path. Everything renders off-screen to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

METHOD_COLORS = {"lerp": "#d62728", "slerp": "#ff7f0e", "geodesic": "#1f77b4", "dijkstra": "#2ca02c"}


def _contour_background(ax, log_density, lo, hi, n=160):
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    z = np.asarray(log_density(np.stack([gx.ravel(), gy.ravel()], axis=1))).reshape(n, n)
    z = np.maximum(z, np.max(z) - 25.0)  # keep the far tails from swallowing the colour range
    ax.contourf(gx, gy, z, levels=30, cmap="Greys")


def plot_paths_2d(out_path, paths: dict, log_density=None, title=""):
    """Overlay 2-D polylines ``{label: (n, 2) array}`` on a log-density contour."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 4.2))
        pts = np.concatenate([np.asarray(p) for p in paths.values()])
        span = np.ptp(pts, axis=0).max() + 1e-9
        lo, hi = pts.min(axis=0) - 0.25 * span, pts.max(axis=0) + 0.25 * span
        if log_density is not None:
            _contour_background(ax, log_density, lo, hi)
        for label, p in paths.items():
            p = np.asarray(p)
            style = "-" if label == "dijkstra" else ".-"
            ax.plot(p[:, 0], p[:, 1], style, color=METHOD_COLORS.get(label), label=label, lw=1.2, ms=3)
        ax.plot(*pts[0], "k^", ms=6)
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_aspect("equal")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.legend(loc="best", frameon=True, framealpha=0.85, edgecolor="none")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(out_path, bbox_inches="tight")
        plt.close(fig)


def plot_log_density_profiles(out_path, profiles: dict, title="log-density along decoded path"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 3.0))
        for label, prof in profiles.items():
            prof = np.asarray(prof)
            ax.plot(np.linspace(0, 1, len(prof)), prof, ".-", color=METHOD_COLORS.get(label), label=label)
        ax.set_xlabel("s")
        ax.set_ylabel("log p")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out_path, bbox_inches="tight")
        plt.close(fig)


def plot_trace(out_path, trace):
    """Objective, length and best-so-far objective against iteration."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 3.0))
        ax.plot(trace.iteration, trace.objective, lw=0.8, label="objective")
        ax.plot(trace.iteration, trace.length, lw=0.8, label="length")
        ax.plot(trace.iteration, trace.best_objective, "k--", lw=0.8, label="best objective")
        ax.set_xlabel("iteration")
        if np.all(np.asarray(trace.objective) > 0):
            ax.set_yscale("log")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out_path, bbox_inches="tight")
        plt.close(fig)


def plot_image_strips(out_path, strips: dict, shape: tuple[int, int]):
    """One row per method, one tile per path point, for samples that are H x W images."""
    h, w = shape
    names = list(strips)
    n = max(len(strips[k]) for k in names)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(names), n, figsize=(0.8 * n, 0.9 * len(names)), squeeze=False)
        for r, name in enumerate(names):
            row = np.asarray(strips[name])
            if row.shape[1] != h * w:
                raise ValueError(f"sample dimension {row.shape[1]} does not match image shape {shape}")
            for c in range(n):
                ax = axes[r, c]
                ax.set_axis_off()
                if c < len(row):
                    ax.imshow(row[c].reshape(h, w), cmap="gray", vmin=-1, vmax=1)
            axes[r, 0].set_title(name, fontsize=8, loc="left")
        fig.tight_layout(pad=0.2)
        fig.savefig(out_path, bbox_inches="tight")
        plt.close(fig)
