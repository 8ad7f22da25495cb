"""Report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}


def new(nrows=1, ncols=1, width=4.5, height=3.0):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(nrows, ncols, figsize=(width * ncols, height * nrows))
    return fig, ax


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def objective_trace(objectives: Sequence[float], path: str | Path) -> Path:
    fig, ax = new()
    ax.plot(np.arange(len(objectives)), objectives, lw=1)
    ax.set_xlabel("frame")
    ax.set_ylabel("per-frame objective")
    return save(fig, path)


def ablation_bars(rows: Sequence[Mapping[str, float]], path: str | Path) -> Path:
    """One panel per metric; ``rows`` carry ``variant``, ``f``, ``psnr``, ``ssim``."""
    names = [r["variant"] for r in rows]
    fig, axes = new(1, 3, width=2.6)
    for ax, key, label in zip(axes, ("f", "psnr", "ssim"), ("F-measure", "PSNR (dB)", "SSIM")):
        vals = [r[key] for r in rows]
        ax.bar(range(len(vals)), vals, color="0.55")
        ax.set_xticks(range(len(vals)), names, rotation=30, ha="right")
        ax.set_title(label)
    fig.tight_layout()
    return save(fig, path)


def bench_loglog(p_values, p_times, r_values, r_times, slopes: tuple[float, float], path: str | Path) -> Path:
    fig, (a, b) = new(1, 2, width=3.2)
    a.loglog(p_values, p_times, "o-")
    a.set_xlabel("pixels p")
    a.set_ylabel("seconds / frame")
    a.set_title(f"slope {slopes[0]:.2f}")
    b.loglog(r_values, r_times, "o-")
    b.set_xlabel("rank r")
    b.set_title(f"slope {slopes[1]:.2f}")
    fig.tight_layout()
    return save(fig, path)


def frame_panel(frame, background, foreground, mask, path: str | Path) -> Path:
    fig, axes = new(1, 4, width=2.0, height=2.2)
    for ax, img, title in zip(axes, (frame, background, np.abs(foreground), mask),
                              ("input", "background", "|foreground|", "mask")):
        ax.imshow(np.asarray(img, dtype=float), cmap="gray", vmin=0, vmax=1)
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    return save(fig, path)
