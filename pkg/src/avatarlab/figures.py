"""Matplotlib report figures written next to the JSON/CSV output."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def save_contact_sheet(images, path: str, titles=None, cols: int = 5) -> str:
    """Grid of rendered avatars or UV maps."""
    n = len(images)
    if n == 0:
        raise ValueError("no images to plot")
    cols = min(cols, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.1 * cols, 2.3 * rows), squeeze=False)
    for k in range(rows * cols):
        ax = axes[k // cols][k % cols]
        ax.axis("off")
        if k < n:
            ax.imshow(np.clip(np.asarray(images[k]), 0.0, 1.0))
            if titles:
                ax.set_title(str(titles[k]), fontsize=7)
    return _finish(fig, path)


def save_ablation_bars(table: dict, path: str) -> str:
    """Side-by-side bars per conditioning mode for each ablation metric."""
    modes = list(table)
    metrics = [k for k in next(iter(table.values())) if k != "n"]
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.0 * len(metrics), 3.2), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        vals = [table[m][metric] if table[m][metric] is not None else 0.0 for m in modes]
        ax.bar(modes, vals, color=["#4477aa", "#66ccee", "#ee6677"][: len(modes)])
        ax.set_title(metric)
        ax.grid(axis="y", alpha=0.3)
    return _finish(fig, path)


def save_loss_curves(history, path: str, keys=("loss",), title: str = "training loss") -> str:
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for key in keys:
        ys = [h[key] for h in history if key in h]
        if ys:
            ax.plot(range(len(ys)), ys, label=key)
    ax.set_xlabel("step")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def save_interp_strip(images, path: str, alphas=None) -> str:
    """One row: decoded renders along an interpolation path."""
    titles = None if alphas is None else [f"α={a:.2f}" for a in alphas]
    return save_contact_sheet(images, path, titles=titles, cols=len(images))
