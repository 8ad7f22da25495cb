"""Ablation and timing experiments shared by the CLI and the acceptance tests."""

from __future__ import annotations

import dataclasses
import time
from typing import Sequence

import numpy as np

from . import metrics
from .basis import Accumulators
from .config import SolverConfig, Variant
from .pipeline import process_frame, process_sequence

ABLATION_ORDER = (Variant.ORPCA, Variant.MCC_ONLY, Variant.LSM_ONLY, Variant.HYPER)


@dataclasses.dataclass
class RunScore:
    variant: str
    f: float
    precision: float
    recall: float
    psnr: float
    ssim: float
    frames: int

    def as_row(self) -> dict:
        return dataclasses.asdict(self)


def score_run(frames: Sequence[np.ndarray], cfg: SolverConfig, gt_masks: Sequence[np.ndarray] | None = None,
              gt_backgrounds: Sequence[np.ndarray] | np.ndarray | None = None, score_from: int = 0) -> RunScore:
    """Run the tracker and score frames ``score_from..`` (0-based).

    ``gt_masks`` are {0, 1} arrays; ``gt_backgrounds`` is either one
    reference image or one image per frame.
    """
    shape = np.shape(frames[0])
    counts = metrics.ConfusionCounts()
    psnrs, ssims = [], []

    def sink(k: int, res) -> None:
        nonlocal counts
        if k < score_from:
            return
        if gt_masks is not None:
            counts = counts + metrics.confusion(res.mask.reshape(shape), np.where(gt_masks[k], 255, 0))
        if gt_backgrounds is not None:
            ref = gt_backgrounds if isinstance(gt_backgrounds, np.ndarray) else gt_backgrounds[k]
            bg = res.background.reshape(shape)
            psnrs.append(metrics.psnr(bg, ref))
            ssims.append(metrics.ssim(bg, ref))

    summary = process_sequence(frames, cfg, sink)
    return RunScore(
        variant=cfg.variant.value,
        f=metrics.f_measure(counts) if gt_masks is not None else float("nan"),
        precision=counts.precision,
        recall=counts.recall,
        psnr=float(np.mean(psnrs)) if psnrs else float("nan"),
        ssim=float(np.mean(ssims)) if ssims else float("nan"),
        frames=summary.frames_processed,
    )


def ablate(frames, cfg: SolverConfig, gt_masks=None, gt_backgrounds=None, score_from: int = 0,
           variants: Sequence[Variant] = ABLATION_ORDER) -> list[RunScore]:
    """Same frames, same seed, one run per variant."""
    return [score_run(frames, cfg.replace(variant=v), gt_masks, gt_backgrounds, score_from) for v in variants]


def format_table(rows: Sequence[RunScore]) -> str:
    head = f"{'variant':<10} {'F':>7} {'precision':>9} {'recall':>7} {'PSNR':>7} {'SSIM':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.variant:<10} {r.f:>7.4f} {r.precision:>9.4f} {r.recall:>7.4f} {r.psnr:>7.2f} {r.ssim:>7.4f}")
    return "\n".join(lines)


def time_frame(p: int, r: int, cfg: SolverConfig, reps: int = 5, seed: int = 0) -> float:
    """Best-of-``reps`` wall time of ``process_frame`` on a synthetic frame of ``p`` pixels.

    ``inner_tol`` is forced tiny so every call runs exactly
    ``inner_max_iters`` sweeps and the timing reflects the per-sweep cost.
    The minimum is the least noisy estimate on a shared host.
    """
    rng = np.random.default_rng(seed)
    cfg = cfg.replace(r=r, inner_tol=1e-300, init_frames=None)
    U = rng.standard_normal((p, r)) / np.sqrt(p)
    v = rng.standard_normal(r)
    d = np.clip(U @ v + 0.3 + 0.01 * rng.standard_normal(p), 0.0, 1.0)
    block = rng.random(p) < 0.04
    d[block] = np.clip(d[block] + 0.5, 0, 1)
    acc = Accumulators.zeros(p, r)
    process_frame(d, U, acc, cfg, v)  # warm-up
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        process_frame(d, U, acc, cfg, v)
        times.append(time.perf_counter() - t0)
    return float(np.min(times))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclasses.dataclass
class BenchResult:
    p_values: list[int]
    p_times: list[float]
    r_values: list[int]
    r_times: list[float]
    fixed_r: int
    fixed_p: int

    @property
    def slope_p(self) -> float:
        return loglog_slope(self.p_values, self.p_times)

    @property
    def slope_r(self) -> float:
        return loglog_slope(self.r_values, self.r_times)


def bench(cfg: SolverConfig, p_values=(32 ** 2, 64 ** 2, 128 ** 2, 256 ** 2), r_values=(5, 10, 20, 40),
          fixed_r: int = 25, fixed_p: int = 128 ** 2, reps: int = 5) -> BenchResult:
    p_times = [time_frame(p, fixed_r, cfg, reps) for p in p_values]
    r_times = [time_frame(fixed_p, r, cfg, reps) for r in r_values]
    return BenchResult(list(p_values), p_times, list(r_values), r_times, fixed_r, fixed_p)
