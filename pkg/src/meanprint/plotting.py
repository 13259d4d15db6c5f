"""PNG figures for command reports (Agg canvas, no display needed)."""

from __future__ import annotations

import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .minutiae import BIFURCATION, TERMINATION, Minutia
from .template import MeanFingerprint

_META = {"Software": None}  # keep PNG bytes stable across matplotlib builds


def _save(fig: Figure, path: str | os.PathLike) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_META)


def plot_scores(genuine, impostor, path: str | os.PathLike, threshold: float | None = None) -> None:
    """Overlaid genuine/impostor score histograms, with the chosen threshold marked."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    bins = np.linspace(0.0, 1.0, 51)
    ax.hist(impostor, bins=bins, alpha=0.6, color="tab:red", label=f"impostor (n={len(impostor)})")
    ax.hist(genuine, bins=bins, alpha=0.6, color="tab:blue", label=f"genuine (n={len(genuine)})")
    if threshold is not None:
        ax.axvline(threshold, color="k", linestyle="--", linewidth=1, label=f"threshold {threshold:.2f}")
    ax.set_xlabel("match score")
    ax.set_ylabel("pairs")
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def _draw_minutiae(ax, minutiae: list[Minutia], tick: float = 8.0) -> None:
    for kind, colour, marker in ((TERMINATION, "tab:red", "o"), (BIFURCATION, "tab:blue", "s")):
        ms = [m for m in minutiae if m.kind == kind]
        if not ms:
            continue
        xs = np.array([m.x for m in ms])
        ys = np.array([m.y for m in ms])
        ax.scatter(xs, ys, s=28, facecolors="none", edgecolors=colour, marker=marker, linewidths=1)
        rad = np.radians([m.angle for m in ms])
        # angles are counter-clockwise positive with y pointing down
        ax.plot(
            np.stack([xs, xs + tick * np.cos(rad)]),
            np.stack([ys, ys - tick * np.sin(rad)]),
            color=colour,
            linewidth=1,
        )


def plot_mean(mean: MeanFingerprint, path: str | os.PathLike) -> None:
    """meanF skeleton over its mask, with minutiae and their directions."""
    h, w = mean.skeleton.shape
    fig = Figure(figsize=(max(3.0, w / 72), max(3.0, h / 72)))
    ax = fig.add_subplot()
    canvas = np.full((h, w), 1.0)
    canvas[mean.mask] = 0.85
    canvas[mean.skeleton] = 0.0
    ax.imshow(canvas, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    _draw_minutiae(ax, mean.minutiae)
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.set_title(f"meanF (base {mean.base_id}): {len(mean.minutiae)} minutiae", fontsize=9)
    ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)

