"""Command-line interface.

Subcommands: segment (single-image training), train-ref (reference-image
training), apply (fixed-weight segmentation of a file or frame directory),
baseline (kmeans | gs), and eval (mIOU + PR/AP report over a prediction and
ground-truth directory tree).
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .baselines import GsConfig, felzenszwalb, kmeans, window_features
from .config import build_config
from .evaluation import (
    GtBundle,
    match_segments,
    miou,
    pr_ap,
    segments_from_labels,
    select_gt,
)
from .imgio import load_image, load_labelmap, load_scribbles, save_labelmap
from .modelfile import load_model, save_model
from .network import HyperParams
from .pipeline import apply_fixed, extract_segments, segment, train_reference

RASTER_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}
GT_VOID_VALUE = 65535  # sentinel in ground-truth rasters for unscored pixels


def _write_loss_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "sim", "con", "scr", "total", "unique_labels"])
        for i, rec in enumerate(history, start=1):
            writer.writerow([i, rec.sim, rec.con, rec.scr, rec.total, rec.unique_labels])


def _loss_csv_path(out_path):
    out_path = Path(out_path)
    return out_path.with_name(out_path.stem + "_losses.csv")


def cmd_segment(args):
    cfg = build_config(
        args.config,
        dict(
            mu=args.mu,
            nu=args.nu,
            lr=args.lr,
            momentum=args.momentum,
            iters=args.iters,
            min_labels=args.min_labels,
            p=args.p,
            q=args.q,
            layers=args.layers,
            seed=args.seed,
            eps=args.eps,
            tv_bounds=args.tv_bounds,
            input=args.input,
            out=args.out,
            viz=args.viz,
            scribbles=args.scribbles,
        ),
    )
    if cfg.input is None or cfg.out is None:
        raise ValueError("segment needs an input image and --out")
    hp = cfg.hyperparams()
    image = load_image(cfg.input)
    scribbles = None
    if cfg.scribbles:
        scribbles = load_scribbles(cfg.scribbles, hp.max_labels)
    result = segment(image, hp, scribbles)
    save_labelmap(result.labels, cfg.out, cfg.viz)
    _write_loss_csv(_loss_csv_path(cfg.out), result.loss_history)
    print(
        f"segment: {cfg.input} -> {cfg.out} "
        f"({result.unique_label_count} labels, {result.iterations_run} iterations)"
    )
    return 0


def cmd_train_ref(args):
    cfg = build_config(
        args.config,
        dict(
            mu=args.mu,
            lr=args.lr,
            momentum=args.momentum,
            p=args.p,
            q=args.q,
            layers=args.layers,
            seed=args.seed,
            eps=args.eps,
            tv_bounds=args.tv_bounds,
            epochs=args.epochs,
            out=args.out,
        ),
    )
    if not args.images or cfg.out is None:
        raise ValueError("train-ref needs reference images and --out")
    hp = cfg.hyperparams()
    images = [load_image(p) for p in args.images]
    params = train_reference(images, hp, epochs=cfg.epochs)
    save_model(cfg.out, params)
    print(f"train-ref: {len(images)} image(s), {cfg.epochs} epoch(s) -> {cfg.out}")
    return 0


def _frame_paths(target):
    target = Path(target)
    if target.is_dir():
        frames = sorted(
            p for p in target.iterdir() if p.suffix.lower() in RASTER_SUFFIXES
        )
        if not frames:
            raise ValueError(f"no raster frames found in {target}")
        return frames
    return [target]


def cmd_apply(args):
    cfg = build_config(
        args.config,
        dict(model=args.model, input=args.input, out_dir=args.out_dir, eps=args.eps),
    )
    if cfg.model is None or cfg.input is None or cfg.out_dir is None:
        raise ValueError("apply needs --model, an input, and --out-dir")
    params = load_model(cfg.model)
    hp = HyperParams(
        layers=params.layers,
        feat_dim=params.feat_dim,
        max_labels=params.max_labels,
        eps=cfg.eps,
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = _frame_paths(cfg.input)
    for frame in frames:
        labels = apply_fixed(params, load_image(frame), hp)
        save_labelmap(
            labels, out_dir / f"{frame.stem}.png", out_dir / f"{frame.stem}_viz.png"
        )
    print(f"apply: {len(frames)} frame(s) -> {out_dir}")
    return 0


def cmd_baseline(args):
    cfg = build_config(
        args.config,
        dict(
            input=args.input,
            out=args.out,
            viz=args.viz,
            k=getattr(args, "k", None),
            window=getattr(args, "window", None),
            max_iter=getattr(args, "max_iter", None),
            seed=getattr(args, "seed", None),
            tau=getattr(args, "tau", None),
            sigma=getattr(args, "sigma", None),
            min_size=getattr(args, "min_size", None),
        ),
    )
    if cfg.input is None or cfg.out is None:
        raise ValueError("baseline needs an input image and --out")
    image = load_image(cfg.input)
    if args.method == "kmeans":
        feats = window_features(image, cfg.window)
        flat = kmeans(feats, cfg.k, seed=cfg.seed, max_iter=cfg.max_iter)
        labels = flat.reshape(image.shape[1], image.shape[2])
    else:
        labels = felzenszwalb(
            image, GsConfig(tau=cfg.tau, sigma=cfg.sigma, min_size=cfg.min_size)
        )
    save_labelmap(labels, cfg.out, cfg.viz)
    print(
        f"baseline {args.method}: {cfg.input} -> {cfg.out} "
        f"({np.unique(labels).size} labels)"
    )
    return 0


def _load_gt_bundle(gt_dir, stem):
    bundle_dir = Path(gt_dir) / stem
    if not bundle_dir.is_dir():
        raise ValueError(f"no ground-truth directory for {stem!r} under {gt_dir}")
    variant_paths = sorted(
        p for p in bundle_dir.iterdir() if p.suffix.lower() in RASTER_SUFFIXES
    )
    if not variant_paths:
        raise ValueError(f"no ground-truth rasters in {bundle_dir}")
    rasters = [load_labelmap(p) for p in variant_paths]
    void = None
    for raster in rasters:
        hit = raster == GT_VOID_VALUE
        if hit.any():
            void = hit if void is None else (void | hit)
    variants = [segments_from_labels(r, void_value=GT_VOID_VALUE) for r in rasters]
    return GtBundle(variants, void)


def cmd_eval(args):
    cfg = build_config(
        args.config,
        dict(
            pred_dir=args.pred_dir,
            gt_dir=args.gt_dir,
            gt_mode=args.mode,
            pr_thresholds=args.pr_thresholds,
            miou_aggregate=args.miou_aggregate,
            report=args.report,
        ),
    )
    if cfg.pred_dir is None or cfg.gt_dir is None:
        raise ValueError("eval needs --pred-dir and --gt-dir")
    if cfg.gt_mode not in ("all", "fine", "coarse"):
        raise ValueError(f"unknown --mode {cfg.gt_mode!r}")
    if cfg.miou_aggregate not in ("pairs", "global"):
        raise ValueError(f"unknown --miou-aggregate {cfg.miou_aggregate!r}")
    pred_paths = sorted(
        p for p in Path(cfg.pred_dir).iterdir() if p.suffix.lower() in RASTER_SUFFIXES
    )
    if not pred_paths:
        raise ValueError(f"no prediction rasters in {cfg.pred_dir}")
    thresholds = cfg.threshold_list()

    rows = []
    pair_mious = []
    pair_weights = []
    matches = []
    total_gt = 0
    for pred_path in pred_paths:
        pred_labels = load_labelmap(pred_path)
        est = extract_segments(pred_labels)
        bundle = _load_gt_bundle(cfg.gt_dir, pred_path.stem)
        for vi, gt in enumerate(select_gt(bundle, cfg.gt_mode)):
            value = miou(gt, est, bundle.void_mask)
            pair_mious.append(value)
            pair_weights.append(len(gt.masks))
            total_gt += len(gt.masks)
            matches.extend(match_segments(gt, est, bundle.void_mask))
            rows.append((f"miou/{pred_path.stem}/{vi}", value))

    if cfg.miou_aggregate == "pairs":
        dataset_miou = float(np.mean(pair_mious))
    else:
        dataset_miou = float(
            np.average(pair_mious, weights=pair_weights) if total_gt else 0.0
        )
    summary = [
        ("images", len(pred_paths)),
        ("gt_pairs", len(pair_mious)),
        ("gt_segments", total_gt),
        ("est_matches", len(matches)),
        ("gt_mode", cfg.gt_mode),
        ("miou_aggregate", cfg.miou_aggregate),
        ("tp_rule", "best_iou strictly above threshold"),
        ("ap_rule", "area under monotonized precision-recall polyline"),
        ("miou", dataset_miou),
    ]
    for t in thresholds:
        curve = pr_ap(matches, t, total_gt)
        summary.append((f"ap@{t:g}", curve.ap))

    lines = [["metric", "value"]]
    lines.extend([name, value] for name, value in summary)
    lines.extend([name, value] for name, value in rows)
    if cfg.report:
        with open(cfg.report, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
        print(f"eval: report written to {cfg.report}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerows(lines)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unsupseg",
        description="Unsupervised single-image segmentation, baselines, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_net_flags(p, scribble=False):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--mu", type=float, default=None, help="continuity weight")
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--momentum", type=float, default=None)
        p.add_argument("--p", type=int, default=None, help="feature channels")
        p.add_argument("--q", type=int, default=None, help="maximum cluster count")
        p.add_argument("--layers", type=int, default=None, help="conv components")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eps", type=float, default=None, help="batch-norm epsilon")
        p.add_argument("--tv-bounds", dest="tv_bounds", choices=("full", "paper"), default=None)

    p_seg = sub.add_parser("segment", help="train on one image and write its label map")
    p_seg.add_argument("input", help="input image (PNG/PPM/PGM)")
    p_seg.add_argument("--out", required=True, help="16-bit raw label raster")
    p_seg.add_argument("--viz", default=None, help="8-bit color visualization")
    p_seg.add_argument("--scribbles", default=None, help="scribble raster (255 = none)")
    p_seg.add_argument("--nu", type=float, default=None, help="scribble weight")
    p_seg.add_argument("--iters", type=int, default=None)
    p_seg.add_argument("--min-labels", dest="min_labels", type=int, default=None)
    add_common_net_flags(p_seg)
    p_seg.set_defaults(func=cmd_segment)

    p_ref = sub.add_parser("train-ref", help="train weights over reference images")
    p_ref.add_argument("images", nargs="+", help="reference images, in training order")
    p_ref.add_argument("--out", required=True, help="output model file")
    p_ref.add_argument("--epochs", type=int, default=None)
    add_common_net_flags(p_ref)
    p_ref.set_defaults(func=cmd_train_ref)

    p_apply = sub.add_parser("apply", help="segment with fixed weights")
    p_apply.add_argument("--model", required=True)
    p_apply.add_argument("input", help="an image, or a directory of frames")
    p_apply.add_argument("--out-dir", dest="out_dir", required=True)
    p_apply.add_argument("--eps", type=float, default=None)
    p_apply.add_argument("--config", default=None)
    p_apply.set_defaults(func=cmd_apply)

    p_base = sub.add_parser("baseline", help="classical segmentation baselines")
    base_sub = p_base.add_subparsers(dest="method", required=True)
    p_km = base_sub.add_parser("kmeans", help="k-means on windowed RGB features")
    p_km.add_argument("input")
    p_km.add_argument("--out", required=True)
    p_km.add_argument("--viz", default=None)
    p_km.add_argument("--k", type=int, default=None)
    p_km.add_argument("--window", type=int, default=None)
    p_km.add_argument("--seed", type=int, default=None)
    p_km.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_km.add_argument("--config", default=None)
    p_km.set_defaults(func=cmd_baseline)
    p_gs = base_sub.add_parser("gs", help="graph-based segmentation")
    p_gs.add_argument("input")
    p_gs.add_argument("--out", required=True)
    p_gs.add_argument("--viz", default=None)
    p_gs.add_argument("--tau", type=float, default=None)
    p_gs.add_argument("--sigma", type=float, default=None)
    p_gs.add_argument("--min-size", dest="min_size", type=int, default=None)
    p_gs.add_argument("--config", default=None)
    p_gs.set_defaults(func=cmd_baseline)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--pred-dir", dest="pred_dir", required=True)
    p_eval.add_argument("--gt-dir", dest="gt_dir", required=True)
    p_eval.add_argument("--mode", choices=("all", "fine", "coarse"), default=None)
    p_eval.add_argument(
        "--pr-thresholds",
        dest="pr_thresholds",
        default=None,
        help="comma-separated IOU thresholds",
    )
    p_eval.add_argument(
        "--miou-aggregate",
        dest="miou_aggregate",
        choices=("pairs", "global"),
        default=None,
    )
    p_eval.add_argument("--report", default=None, help="write the CSV report here")
    p_eval.add_argument("--config", default=None)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
