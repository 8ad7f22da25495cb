"""Command-line entry point: ``hyperrpca {run,eval,synth,ablate,bench}``.

Exit codes: 0 success, 1 usage or configuration error, 2 ingestion error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from . import metrics, plotting
from .config import ConfigError, SolverConfig, coerce_fields, dump_key_values, load_config_file
from .experiments import ablate, bench, format_table
from .pipeline import process_sequence
from .synth import InvalidConfigError, NoiseSpec, SynthConfig, generate, parse_rect

log = logging.getLogger("hyperrpca")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_SOLVER = 0, 1, 2, 3

# flag dest -> SolverConfig field
SOLVER_FLAGS = {
    "rank": "r", "sigma": "sigma", "sigma_w2": "sigma_w2", "eta": "eta", "eps": "eps",
    "variant": "variant", "mask_threshold": "mask_threshold", "inner_tol": "inner_tol",
    "inner_max_iters": "inner_max_iters", "lambda_l1": "lambda_l1", "init_frames": "init_frames",
    "seed": "seed",
}
LAYOUT_KEYS = ("input", "gt", "out", "background_ref")


class UsageError(Exception):
    pass


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--rank", type=int)
    g.add_argument("--sigma", type=float, help="kernel width (intensity units)")
    g.add_argument("--sigma-w2", type=float, help="modeling-error variance")
    g.add_argument("--eta", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--variant", choices=["HYPER", "LSM_ONLY", "MCC_ONLY", "ORPCA"])
    g.add_argument("--mask-threshold", type=float)
    g.add_argument("--inner-tol", type=float)
    g.add_argument("--inner-max-iters", type=int)
    g.add_argument("--lambda-l1", type=float)
    g.add_argument("--init-frames", type=int)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic sequence")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--frames", type=int)
    g.add_argument("--background", choices=["static", "oscillating"])
    g.add_argument("--background-rank", type=int)
    g.add_argument("--oscillation-amplitude", type=float)
    g.add_argument("--rect", action="append", metavar="H,W[,AMP[,VY,VX[,DWELL]]]",
                   help="moving rectangle; repeatable")
    g.add_argument("--gaussian-std", type=float)
    g.add_argument("--poisson", action="store_true", default=None)
    g.add_argument("--poisson-peak", type=float)
    g.add_argument("--salt-pepper", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperrpca", description="Online moving object detection.")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key=value file; flags override it")
        p.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="process a frame directory")
    common(run)
    _add_solver_flags(run)
    run.add_argument("--input", type=Path)
    run.add_argument("--out", type=Path)
    run.add_argument("--checkpoint", type=Path, help="resume from this basis checkpoint")
    run.add_argument("--no-figures", action="store_true")

    ev = sub.add_parser("eval", help="score masks (and backgrounds) against ground truth")
    common(ev)
    ev.add_argument("--out", type=Path, help="directory written by run")
    ev.add_argument("--masks", type=Path)
    ev.add_argument("--backgrounds", type=Path)
    ev.add_argument("--gt", type=Path)
    ev.add_argument("--background-ref", type=Path)
    ev.add_argument("--metrics", type=Path)
    ev.add_argument("--f-mode", choices=["pooled", "mean"], default="pooled")

    sy = sub.add_parser("synth", help="write a synthetic sequence with ground truth")
    common(sy)
    _add_synth_flags(sy)
    sy.add_argument("--out", type=Path)

    ab = sub.add_parser("ablate", help="compare ORPCA, MCC_ONLY, LSM_ONLY and HYPER")
    common(ab)
    _add_solver_flags(ab)
    _add_synth_flags(ab)
    ab.add_argument("--input", type=Path, help="frame directory (default: synthetic sequence)")
    ab.add_argument("--gt", type=Path)
    ab.add_argument("--background-ref", type=Path)
    ab.add_argument("--out", type=Path)
    ab.add_argument("--score-from", type=int, default=1, help="first scored frame (1-based)")
    ab.add_argument("--no-figures", action="store_true")

    be = sub.add_parser("bench", help="per-frame timing vs frame size and rank")
    common(be)
    _add_solver_flags(be)
    be.add_argument("--p-values", type=str, default="1024,4096,16384,65536")
    be.add_argument("--r-values", type=str, default="5,10,20,40")
    be.add_argument("--fixed-r", type=int, default=25)
    be.add_argument("--fixed-p", type=int, default=128 ** 2)
    be.add_argument("--reps", type=int, default=5)
    be.add_argument("--out", type=Path)
    be.add_argument("--no-figures", action="store_true")
    return parser


def _file_values(args) -> dict[str, str]:
    if getattr(args, "config", None) is None:
        return {}
    try:
        return load_config_file(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None


def solver_config(args, file_values: dict[str, str]) -> SolverConfig:
    values = coerce_fields(SolverConfig, file_values)
    if "rank" in file_values:
        values["r"] = int(file_values["rank"])
    for dest, field in SOLVER_FLAGS.items():
        val = getattr(args, dest, None)
        if val is not None:
            values[field] = val
    return SolverConfig(**values)


def synth_config(args, file_values: dict[str, str]) -> SynthConfig:
    values: dict[str, object] = {k: v for k, v in file_values.items()}
    for key in ("width", "height", "frames", "background", "background_rank", "oscillation_amplitude",
                "gaussian_std", "poisson", "poisson_peak", "salt_pepper", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if getattr(args, "rect", None):
        values["rects"] = tuple(parse_rect(r) for r in args.rect)
    cfg = SynthConfig.from_values(values)
    cfg.validate()
    return cfg


def _layout_value(args, file_values, key) -> Path | None:
    val = getattr(args, key, None)
    if val is None and key in file_values and file_values[key].lower() != "none":
        val = Path(file_values[key])
    return val


def _input_dir(path: Path) -> Path:
    # accept either the frame directory or a CDnet sequence root holding input/
    return path / "input" if (path / "input").is_dir() else path


def cmd_run(args) -> int:
    fv = _file_values(args)
    cfg = solver_config(args, fv)  # validate before touching any frame
    inp = _layout_value(args, fv, "input")
    out = _layout_value(args, fv, "out")
    if inp is None or out is None:
        raise UsageError("run needs --input and --out")
    items = fio.scan_sequence(fio.SequenceLayout(_input_dir(inp)))
    first = fio.read_frame(items[0].path)
    shape = first.shape
    out.mkdir(parents=True, exist_ok=True)
    writer = fio.ResultWriter(out, shape, [it.index for it in items])
    tracker = None
    if args.checkpoint is not None:
        from .basis import load_checkpoint
        from .pipeline import Tracker
        U, acc = load_checkpoint(args.checkpoint)
        tracker = Tracker(U, cfg, acc, shape=shape)
    last: dict[str, object] = {}

    def frames():
        for f in fio.iter_frames(items):
            last["frame"] = f
            yield f

    def sink(k, result):
        writer(k, result)
        last["result"] = result

    t0 = time.perf_counter()
    summary = process_sequence(frames(), cfg, sink, checkpoint=out / "checkpoint.bin", tracker=tracker)
    elapsed = time.perf_counter() - t0
    with open(out / "objective.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "objective", "seconds"])
        for k, (obj, sec) in enumerate(zip(summary.objectives, summary.seconds)):
            w.writerow([items[k].index, repr(obj), f"{sec:.6f}"])
    manifest = {"input": inp.resolve(), "out": out.resolve(), **cfg.to_dict()}
    (out / "manifest.txt").write_text(
        dump_key_values(manifest)
        + f"# frames_processed={summary.frames_processed}\n# init_frames={summary.init_frames}\n"
        + f"# seconds_total={elapsed:.3f}\n"
    )
    if not args.no_figures and len(summary.objectives):
        plotting.objective_trace(summary.objectives, out / "objective.png")
        res = last["result"]
        plotting.frame_panel(last["frame"], res.background.reshape(shape), res.foreground.reshape(shape),
                             res.mask.reshape(shape), out / "last_frame.png")
    print(f"processed {summary.frames_processed} frames in {elapsed:.2f}s -> {out}")
    if summary.error:
        print(f"error: source failed after {summary.frames_processed} frames: {summary.error}", file=sys.stderr)
        return EXIT_INGEST
    return EXIT_OK


def _indexed(directory: Path, pattern: str) -> dict[int, Path]:
    return {fio.frame_index(p): p for p in sorted(directory.glob(pattern))}


def cmd_eval(args) -> int:
    fv = _file_values(args)
    out = _layout_value(args, fv, "out")
    masks_dir = args.masks or (out / "mask" if out else None)
    gt_dir = _layout_value(args, fv, "gt")
    if masks_dir is None or gt_dir is None:
        raise UsageError("eval needs --masks (or --out) and --gt")
    if not gt_dir.is_dir():
        raise fio.IngestionError(f"ground-truth directory {gt_dir} does not exist")
    if not masks_dir.is_dir():
        raise fio.IngestionError(f"mask directory {masks_dir} does not exist")
    masks = _indexed(masks_dir, "*.pgm")
    gts = _indexed(gt_dir, "*.pgm")
    ref_path = _layout_value(args, fv, "background_ref")
    bg_dir = args.backgrounds or (out / "background" if out else None)
    ref = fio.read_frame(ref_path) if ref_path is not None else None
    bgs = _indexed(bg_dir, "*.pgm") if (ref is not None and bg_dir is not None and bg_dir.is_dir()) else {}

    frames = []
    for idx in sorted(masks):
        counts = None
        if idx in gts:
            counts = metrics.confusion(fio.read_labels(masks[idx]) > 0, fio.read_labels(gts[idx]))
        fm = metrics.FrameMetrics(idx, counts)
        if idx in bgs:
            bg = fio.read_frame(bgs[idx])
            fm.psnr, fm.ssim = metrics.psnr(bg, ref), metrics.ssim(bg, ref)
        frames.append(fm)
    report = metrics.MetricsReport(frames)
    if not report.scored:
        raise fio.IngestionError(f"no scorable frames: no mask in {masks_dir} has ground truth in {gt_dir}")
    metrics_path = args.metrics or (out / "metrics.csv" if out else Path("metrics.csv"))
    report.write_csv(metrics_path, args.f_mode)
    pooled = report.pooled()
    print(f"frames scored: {len(report.scored)}")
    print(f"precision={pooled.precision:.4f} recall={pooled.recall:.4f} "
          f"F={report.aggregate_f(args.f_mode):.4f} ({args.f_mode})")
    if bgs:
        print(f"PSNR={report.mean_psnr():.2f} dB SSIM={report.mean_ssim():.4f}")
    print(f"metrics -> {metrics_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    fv = _file_values(args)
    cfg = synth_config(args, fv)
    out = _layout_value(args, fv, "out")
    if out is None:
        raise UsageError("synth needs --out")
    frames, masks, bgs = generate(cfg)
    fio.write_sequence(out, frames, masks)
    (out / "background").mkdir(exist_ok=True)
    for k, bg in enumerate(bgs):
        fio.write_frame(bg, out / "background" / f"bg{k + 1:06d}.pgm")
    fio.write_frame(bgs[0] if cfg.background == "static" else np.mean(bgs, axis=0), out / "background_ref.pgm")
    (out / "synth.txt").write_text(dump_key_values(cfg.to_values()))
    print(f"wrote {cfg.frames} frames of {cfg.width}x{cfg.height} -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    fv = _file_values(args)
    cfg = solver_config(args, fv)
    inp = _layout_value(args, fv, "input")
    gt_masks = gt_bgs = None
    if inp is None:
        scfg = synth_config(args, fv)
        frames, gt_masks, gt_bgs = generate(scfg)
    else:
        items = fio.scan_sequence(fio.SequenceLayout(_input_dir(inp), _layout_value(args, fv, "gt")))
        frames = list(fio.iter_frames(items))
        if all(it.gt_path is not None for it in items):
            gt_masks = [metrics.decode_labels(fio.read_labels(it.gt_path))[0] for it in items]
        ref = _layout_value(args, fv, "background_ref")
        gt_bgs = fio.read_frame(ref) if ref is not None else None
    rows = ablate(frames, cfg, gt_masks, gt_bgs, score_from=max(args.score_from - 1, 0))
    table = format_table(rows)
    print(table)
    out = _layout_value(args, fv, "out")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].as_row()))
            w.writeheader()
            for r in rows:
                w.writerow(r.as_row())
        (out / "ablation.txt").write_text(table + "\n")
        if not args.no_figures:
            plotting.ablation_bars([r.as_row() for r in rows], out / "ablation.png")
    return EXIT_OK


def cmd_bench(args) -> int:
    fv = _file_values(args)
    cfg = solver_config(args, fv)
    try:
        p_values = [int(x) for x in args.p_values.split(",")]
        r_values = [int(x) for x in args.r_values.split(",")]
    except ValueError:
        raise UsageError("--p-values and --r-values take comma-separated integers") from None
    res = bench(cfg, p_values, r_values, args.fixed_r, args.fixed_p, args.reps)
    print(f"{'p':>8} {'r':>4} {'seconds':>10}")
    for p, t in zip(res.p_values, res.p_times):
        print(f"{p:>8} {res.fixed_r:>4} {t:>10.5f}")
    for r, t in zip(res.r_values, res.r_times):
        print(f"{res.fixed_p:>8} {r:>4} {t:>10.5f}")
    print(f"slope_p={res.slope_p:.3f}")
    print(f"slope_r={res.slope_r:.3f}")
    out = _layout_value(args, fv, "out")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "r", "seconds"])
            w.writerows([p, res.fixed_r, t] for p, t in zip(res.p_values, res.p_times))
            w.writerows([res.fixed_p, r, t] for r, t in zip(res.r_values, res.r_times))
            w.writerow(["slope_p", "", res.slope_p])
            w.writerow(["slope_r", "", res.slope_r])
        if not args.no_figures:
            plotting.bench_loglog(res.p_values, res.p_times, res.r_values, res.r_times,
                                  (res.slope_p, res.slope_r), out / "bench.png")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "synth": cmd_synth, "ablate": cmd_ablate, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, InvalidConfigError, metrics.InvalidLabelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (fio.IngestionError, fio.PGMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
