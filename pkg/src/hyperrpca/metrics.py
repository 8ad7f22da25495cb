"""Foreground and background quality metrics.

Ground-truth masks follow the CDnet label encoding: 255 is foreground, 0
and 50 (static / hard shadow) are background, 85 and 170 (outside the
region of interest / unknown motion) are excluded from scoring.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FOREGROUND_LABELS = (255,)
BACKGROUND_LABELS = (0, 50)
IGNORED_LABELS = (85, 170)


class InvalidLabelError(ValueError):
    pass


@dataclasses.dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    ignored: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(*(a + b for a, b in zip(dataclasses.astuple(self), dataclasses.astuple(other))))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn + self.ignored

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else float("nan")

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")


def decode_labels(gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (foreground, scored) boolean arrays from a CDnet label image."""
    gt = np.asarray(gt)
    known = FOREGROUND_LABELS + BACKGROUND_LABELS + IGNORED_LABELS
    bad = ~np.isin(gt, known)
    if bad.any():
        raise InvalidLabelError(f"unknown ground-truth label {int(gt[bad].flat[0])}")
    return gt == 255, ~np.isin(gt, IGNORED_LABELS)


def confusion(mask: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    mask = np.asarray(mask)
    gt = np.asarray(gt)
    if mask.shape != gt.shape:
        raise ValueError(f"mask shape {mask.shape} != ground truth shape {gt.shape}")
    fg, scored = decode_labels(gt)
    pred = mask.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & fg & scored)),
        fp=int(np.count_nonzero(pred & ~fg & scored)),
        fn=int(np.count_nonzero(~pred & fg & scored)),
        tn=int(np.count_nonzero(~pred & ~fg & scored)),
        ignored=int(np.count_nonzero(~scored)),
    )


def f_measure(c: ConfusionCounts) -> float:
    """Harmonic mean of precision and recall.

    A frame with no foreground in either mask or ground truth scores 1.
    """
    if c.tp == 0:
        return 1.0 if c.fp == 0 and c.fn == 0 else 0.0
    p = c.tp / (c.tp + c.fp)
    r = c.tp / (c.tp + c.fn)
    return 2 * p * r / (p + r)


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """PSNR in dB for intensities in [0, 1]; ``inf`` for identical images."""
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    mse = float(np.mean((x - ref) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, std: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * std * std))
    g /= g.sum()
    return g


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, keeping only positions where the window fits
    k = g.shape[0]
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(x: np.ndarray, ref: np.ndarray, *, win: int = 11, std: float = 1.5, data_range: float = 1.0) -> float:
    """Mean SSIM over all positions where an 11x11 Gaussian window fits."""
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    if x.ndim != 2 or min(x.shape) < win:
        raise ValueError(f"ssim needs a 2-D image of at least {win}x{win}, got {x.shape}")
    g = _gaussian_window(win, std)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(ref, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(ref * ref, g) - my * my
    sxy = _filter_valid(x * ref, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def average_background(frames: Iterable[np.ndarray], fg_masks: Iterable[np.ndarray]) -> np.ndarray:
    """Per-pixel mean over the frames in which the pixel is not foreground.

    Pixels that are foreground in every frame fall back to the plain mean.
    """
    total = count = plain = None
    n = 0
    for f, m in zip(frames, fg_masks):
        f = np.asarray(f, dtype=float)
        keep = ~np.asarray(m, dtype=bool)
        if total is None:
            total, count, plain = np.zeros_like(f), np.zeros_like(f), np.zeros_like(f)
        total += np.where(keep, f, 0.0)
        count += keep
        plain += f
        n += 1
    if total is None:
        raise ValueError("no frames")
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), plain / n)


@dataclasses.dataclass
class FrameMetrics:
    index: int
    counts: ConfusionCounts | None
    psnr: float | None = None
    ssim: float | None = None

    @property
    def f_measure(self) -> float | None:
        return f_measure(self.counts) if self.counts is not None else None


@dataclasses.dataclass
class MetricsReport:
    frames: list[FrameMetrics]

    def pooled(self) -> ConfusionCounts:
        out = ConfusionCounts()
        for fm in self.frames:
            if fm.counts is not None:
                out = out + fm.counts
        return out

    @property
    def scored(self) -> list[FrameMetrics]:
        return [fm for fm in self.frames if fm.counts is not None]

    def aggregate_f(self, mode: str = "pooled") -> float:
        """F-measure from pooled counts, or the mean of per-frame values with ``mode="mean"``."""
        if mode == "pooled":
            return f_measure(self.pooled())
        if mode == "mean":
            vals = [fm.f_measure for fm in self.scored]
            return float(np.mean(vals)) if vals else float("nan")
        raise ValueError(f"unknown aggregation mode {mode!r}")

    def mean_psnr(self) -> float:
        vals = [fm.psnr for fm in self.frames if fm.psnr is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_ssim(self) -> float:
        vals = [fm.ssim for fm in self.frames if fm.ssim is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def write_csv(self, path: str | Path, mode: str = "pooled") -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["frame_index", "precision", "recall", "f", "psnr", "ssim"])
            for fm in self.frames:
                c = fm.counts
                out.writerow([
                    fm.index,
                    _fmt(c.precision if c else None),
                    _fmt(c.recall if c else None),
                    _fmt(fm.f_measure),
                    _fmt(fm.psnr),
                    _fmt(fm.ssim),
                ])
            pooled = self.pooled()
            out.writerow([
                "aggregate",
                _fmt(pooled.precision if self.scored else None),
                _fmt(pooled.recall if self.scored else None),
                _fmt(self.aggregate_f(mode) if self.scored else None),
                _fmt(self.mean_psnr() if any(f.psnr is not None for f in self.frames) else None),
                _fmt(self.mean_ssim() if any(f.ssim is not None for f in self.frames) else None),
            ])


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def evaluate(masks: Sequence[np.ndarray | None], gts: Sequence[np.ndarray | None],
             backgrounds: Sequence[np.ndarray] | None = None, ref_background: np.ndarray | None = None,
             indices: Sequence[int] | None = None) -> MetricsReport:
    """Score a sequence; frames with no ground truth get ``counts=None``."""
    frames = []
    for k, (m, g) in enumerate(zip(masks, gts)):
        idx = indices[k] if indices is not None else k
        counts = confusion(m, g) if (m is not None and g is not None) else None
        fm = FrameMetrics(idx, counts)
        if backgrounds is not None and ref_background is not None:
            bg = np.asarray(backgrounds[k]).reshape(ref_background.shape)
            fm.psnr = psnr(bg, ref_background)
            fm.ssim = ssim(bg, ref_background)
        frames.append(fm)
    return MetricsReport(frames)
