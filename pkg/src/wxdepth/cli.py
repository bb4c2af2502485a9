"""Command-line entry point: gen, eval, stats, align, demo."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .align_distill import PyramidLevels, distill_terms, teacher_prior_from_disparity, teacher_prior_from_metric, total_loss
from .core import WxDepthError
from .metrics import DEFAULT_EDGES, compare_weather_trend, compute_metrics, range_histogram
from .pipeline import GenerationConfig, run_dataset

log = logging.getLogger("wxdepth")

EXIT_OK, EXIT_CONFIG, EXIT_FRAME_FAILURES = 0, 1, 2


def _csv(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _frames(s: str):
    if s == "all":
        return "all"
    if s.startswith("@"):
        return [ln.strip() for ln in Path(s[1:]).read_text().splitlines() if ln.strip()]
    try:
        return float(s)
    except ValueError:
        return _csv(s)


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    config = GenerationConfig(
        input_root=args.input,
        output_root=args.output,
        weathers=tuple(_csv(args.weather)),
        levels=tuple(int(x) for x in _csv(args.levels)),
        times=tuple(_csv(args.time)),
        lenses=tuple(_csv(args.lens)),
        global_seed=args.seed,
        frames=_frames(args.frames),
        emit_paired_clean=args.paired_clean,
        jobs=args.jobs,
        mask_dir=args.mask_dir,
    )
    manifest = run_dataset(config)
    log.info("wrote %d records, %d failures", len(manifest.records), len(manifest.errors))
    return EXIT_FRAME_FAILURES if manifest.errors else EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    gt_files = sorted(gt_dir.glob("*.png"))
    if not gt_files:
        raise WxDepthError(f"no ground-truth PNGs in {gt_dir}")
    per_frame, failures = {}, 0
    for g in gt_files:
        p = pred_dir / g.name
        try:
            rep = compute_metrics(io.read_depth_png(p), io.read_depth_png(g))
        except (WxDepthError, OSError) as exc:
            log.error("%s: %s", g.stem, exc)
            failures += 1
            continue
        per_frame[g.stem] = rep.to_json_dict()
    keys = ("rmse_mm", "mae_mm", "irmse_per_km", "imae_per_km")
    mean = {k: float(np.mean([r[k] for r in per_frame.values()])) if per_frame else None for k in keys}
    mean["valid_pixels"] = int(sum(r["valid_pixels"] for r in per_frame.values()))
    _emit({"mean": mean, "frames": per_frame}, args.out)
    return EXIT_FRAME_FAILURES if failures else EXIT_OK


def cmd_stats(args) -> int:
    edges = [float(x) for x in _csv(args.edges)] if args.edges else DEFAULT_EDGES
    hist = None
    for f in sorted(Path(args.cloud_dir).glob("*.bin")):
        h = range_histogram(io.read_cloud(f, sanitize=True), edges)
        hist = h if hist is None else hist.merged(h)
    if hist is None:
        hist = range_histogram(np.empty(0), edges)
    _emit(hist.to_dict(), args.out)
    return EXIT_OK


def cmd_trend(args) -> int:
    hists = {}
    for spec in args.dirs:
        sev, _, d = spec.partition("=")
        hist = None
        for f in sorted(Path(d).glob("*.bin")):
            h = range_histogram(io.read_cloud(f, sanitize=True))
            hist = h if hist is None else hist.merged(h)
        if hist is not None:
            hists[float(sev)] = hist
    _emit(compare_weather_trend(hists).to_dict(), args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    teacher, kind = io.read_grid(args.teacher)
    if args.teacher_kind and kind and args.teacher_kind != kind:
        raise WxDepthError(f"teacher file declares {kind!r} but --teacher-kind is {args.teacher_kind!r}")
    kind = args.teacher_kind or kind
    if kind not in io.TEACHER_KINDS:
        raise WxDepthError("teacher kind unknown: pass --teacher-kind disparity|metric")
    gt = io.read_depth_png(args.gt)
    student, _ = io.read_grid(args.student)
    prior_fn = teacher_prior_from_disparity if kind == "disparity" else teacher_prior_from_metric
    prior = prior_fn(teacher, gt)
    deltas = tuple(2.0**-l for l in range(args.levels))
    levels = PyramidLevels.build(student, args.levels, valid_mask=gt.valid, deltas=deltas)
    rep = distill_terms(levels, prior.values)
    out = {
        "teacher_kind": kind,
        "levels": [
            {
                "level": r.level,
                "alpha": r.fit.a if r.fit else None,
                "beta": r.fit.b if r.fit else None,
                "pixels": r.fit.count if r.fit else 0,
                "ssi": r.ssi,
                "grad": r.grad,
                "degenerate": r.degenerate,
            }
            for r in rep.levels
        ],
        "ssi_loss": rep.ssi,
        "grad_loss": rep.grad,
        "total_loss": total_loss(args.l_sup, rep.ssi, rep.grad, args.lambda_d, args.lambda_g),
    }
    _emit(out, args.out)
    return EXIT_OK


def cmd_demo(args) -> int:
    from .synthetic import make_frame, write_kitti_tree

    frames = [make_frame(args.seed, f"{i:06d}") for i in range(args.frames)]
    write_kitti_tree(args.output, frames)
    log.info("wrote %d synthetic frames to %s", len(frames), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wxdepth", description="Weather corruption toolkit for RGB-LiDAR depth data")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a corrupted dataset")
    g.add_argument("--input", required=True)
    g.add_argument("--output", required=True)
    g.add_argument("--weather", default="fog,rain,snow", help="comma list from clear,fog,rain,snow")
    g.add_argument("--levels", default="1,2,3")
    g.add_argument("--time", default="day", help="comma list from day,night")
    g.add_argument("--lens", default="none", help="comma list from none,raindrop,snowflake")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--frames", default="all", help="'all', comma ids, @file, or a fraction")
    g.add_argument("--paired-clean", action="store_true")
    g.add_argument("--mask-dir", default=None, help="directory of rd_*/sf_* occluder masks")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("eval", help="depth metrics of predictions against ground truth")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--gt-dir", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="range histogram of a directory of clouds")
    s.add_argument("--cloud-dir", required=True)
    s.add_argument("--edges", help="comma list of bin edges in meters")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("trend", help="range trend across severities (severity=cloud_dir ...)")
    t.add_argument("dirs", nargs="+")
    t.add_argument("--out")
    t.set_defaults(func=cmd_trend)

    a = sub.add_parser("align", help="teacher normalization and distillation terms")
    a.add_argument("--teacher", required=True)
    a.add_argument("--teacher-kind", choices=io.TEACHER_KINDS)
    a.add_argument("--gt", required=True)
    a.add_argument("--student", required=True)
    a.add_argument("--levels", type=int, default=4)
    a.add_argument("--lambda-d", type=float, default=1.0)
    a.add_argument("--lambda-g", type=float, default=0.5)
    a.add_argument("--l-sup", type=float, default=0.0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_align)

    d = sub.add_parser("demo", help="write a small synthetic input tree")
    d.add_argument("--output", required=True)
    d.add_argument("--frames", type=int, default=3)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (WxDepthError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
