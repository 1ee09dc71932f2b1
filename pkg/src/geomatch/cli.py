"""Batch command-line interface.

Subcommands cover the full pipeline: descriptor extraction, single-pair
matching, pool search, the two-pass pseudo-label generation (score, then
emit once the category threshold is known), evaluation, and warp/overlay
visualization.

Every failure exits with a single machine-parseable line
``error: <code>: <detail>`` and a class-specific status: 0 ok, 2 usage,
3 format, 4 dimension/category, 5 missing artifact, 6 numerical.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, images
from .errors import (
    GeomatchError,
    MissingArtifactError,
    NumericalError,
    UsageError,
)
from .features import DescriptorConfig, extract_descriptors
from .matching import matching_score_gradient
from .metrics import IoUAccumulator
from .optimize import OptimConfig, finite_diff_gradient, optimize_transform
from .pool import build_pool, select_best_source, select_best_source_with_viewpoint
from .pseudolabel import (
    ConfidenceMap,
    DEFAULT_PERCENTILE,
    confidence_scores,
    percentile_threshold,
    threshold_warped_labels,
    warp_labels,
)
from .sampler import sample_features_batch
from .tps import TpsParams, solve, transform_points
from .types import IGNORE, FeatureGrid, LabelMask, norm_coord_grid

GRADCHECK_TOLERANCE = 1e-3

SEARCH_SUFFIX = ".search.tsv"
THETA_SUFFIX = ".search.tpsp"
CONF_SUFFIX = ".conf.fgrd"
WARP_SUFFIX = ".warp.lmsk"
PSEUDO_SUFFIX = ".pseudo.lmsk"


def _add_optimizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int, default=OptimConfig.max_iters)
    p.add_argument("--step", type=float, default=OptimConfig.step_size)
    p.add_argument("--beta1", type=float, default=OptimConfig.beta1)
    p.add_argument("--beta2", type=float, default=OptimConfig.beta2)
    p.add_argument("--rel-tol", type=float, default=OptimConfig.rel_tol)
    p.add_argument("--clamp", type=float, default=OptimConfig.clamp)
    p.add_argument("--tps-k", type=int, default=OptimConfig.control_points)
    p.add_argument("--tps-lambda", type=float, default=OptimConfig.reg_weight)


def _optim_config(args: argparse.Namespace) -> OptimConfig:
    try:
        return OptimConfig(
            max_iters=args.max_iters,
            step_size=args.step,
            beta1=args.beta1,
            beta2=args.beta2,
            rel_tol=args.rel_tol,
            clamp=args.clamp,
            control_points=args.tps_k,
            reg_weight=args.tps_lambda,
        )
    except GeomatchError as exc:
        raise UsageError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geomatch",
        description="Geometric matching, pseudo-labeling, and part segmentation evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="optimize a warp between one source/target grid pair")
    p.add_argument("--source", required=True, type=Path)
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--simmap", type=Path, help="also write the per-position similarity map")
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("search", help="grid search a target against a source pool")
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--pool", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--out-theta", type=Path)
    p.add_argument("--azimuth", type=float)
    p.add_argument("--elevation", type=float)
    p.add_argument("--jobs", type=int, default=1)
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("pseudolabel", help="two-pass pseudo-label pipeline")
    passes = p.add_subparsers(dest="stage", required=True)

    ps = passes.add_parser("score", help="pass 1: confidence-score every target")
    ps.add_argument("--search-results", required=True, type=Path)
    ps.add_argument("--pool", required=True, type=Path)
    ps.add_argument("--probs", required=True, type=Path)
    ps.add_argument("--out", required=True, type=Path)
    ps.add_argument("--jobs", type=int, default=1)
    ps.set_defaults(func=cmd_pseudolabel_score)

    pe = passes.add_parser("emit", help="pass 2: threshold and emit pseudo-labels")
    pe.add_argument("--scores", required=True, type=Path)
    pe.add_argument("--percentile", type=float, default=DEFAULT_PERCENTILE)
    pe.add_argument("--out", required=True, type=Path)
    pe.add_argument(
        "--per-image",
        action="store_true",
        help="threshold each image by its own percentile instead of the pooled one",
    )
    pe.set_defaults(func=cmd_pseudolabel_emit)

    p = sub.add_parser("eval", help="mIoU evaluation of predicted masks")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--category", required=True, type=Path)
    p.add_argument("--remap", type=Path)
    p.add_argument("--include-background", action="store_true")
    p.add_argument("--summary", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("warp", help="apply a stored warp to a mask, grid, or image")
    p.add_argument("--theta", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--overlay", type=Path, help="blend the warped mask over this image")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("features", help="extract a descriptor grid from an image")
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--cell", type=int, default=DescriptorConfig.cell_size)
    p.add_argument("--bins", type=int, default=DescriptorConfig.bins)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("gradcheck", help="verify the analytic gradient against differences")
    p.add_argument("--source", required=True, type=Path)
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tps-k", type=int, default=OptimConfig.control_points)
    p.add_argument("--tps-lambda", type=float, default=0.0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


# ------------------------------------------------------------- commands

def cmd_match(args: argparse.Namespace) -> int:
    source = formats.read_feature_grid(args.source)
    target = formats.read_feature_grid(args.target)
    result = optimize_transform(source, target, _optim_config(args))
    formats.write_tps_params(args.out, result.theta_hat)
    if args.simmap:
        formats.write_feature_grid(
            args.simmap, FeatureGrid(result.similarity.values[:, :, None])
        )
    print(f"phi={result.phi:.17g}")
    print(f"iterations={result.iterations}")
    print(f"converged={int(result.converged)}")
    print(f"valid_positions={result.similarity.valid_count}")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    target = formats.read_feature_grid(args.target)
    pool = build_pool(args.pool)
    if pool.partial:
        print("warning: pool is missing viewpoints for some prototypes", file=sys.stderr)
    config = _optim_config(args)
    if (args.azimuth is None) != (args.elevation is None):
        raise UsageError("--azimuth and --elevation must be given together")
    if args.azimuth is not None:
        result = select_best_source_with_viewpoint(
            target, pool, args.azimuth, args.elevation, config, jobs=args.jobs
        )
    else:
        result = select_best_source(target, pool, config, jobs=args.jobs)
    formats.write_search_result(
        args.out,
        result.winner_id,
        result.winner.phi,
        result.winner.iterations,
        result.winner.converged,
        list(result.ranking),
    )
    theta_path = args.out_theta or args.out.with_suffix(".tpsp")
    formats.write_tps_params(theta_path, result.winner.theta_hat)
    print(f"winner={result.winner_id}")
    print(f"phi={result.winner.phi:.17g}")
    print(f"candidates={len(result.ranking)}")
    return 0


def _search_stems(results_dir: Path) -> list[tuple[str, Path]]:
    if not results_dir.is_dir():
        raise MissingArtifactError(f"search results directory not found: {results_dir}")
    found = sorted(results_dir.glob(f"*{SEARCH_SUFFIX}"))
    if not found:
        raise MissingArtifactError(
            f"no '*{SEARCH_SUFFIX}' files in {results_dir}; run 'geomatch search' first"
        )
    return [(p.name[: -len(SEARCH_SUFFIX)], p) for p in found]


def cmd_pseudolabel_score(args: argparse.Namespace) -> int:
    stems = _search_stems(args.search_results)
    pool = build_pool(args.pool)
    args.out.mkdir(parents=True, exist_ok=True)

    def score_one(stem: str, result_path: Path) -> tuple[str, float]:
        winner_id, _, _, _, _ = formats.read_search_result(result_path)
        theta_path = args.search_results / f"{stem}{THETA_SUFFIX}"
        theta = formats.read_tps_params(theta_path)
        probs = formats.read_probability_map(args.probs / f"{stem}.pmap")
        entry = pool.entry(winner_id)
        source_label = entry.load_labels()
        solved = solve(theta)
        conf = confidence_scores(source_label, solved, probs)
        warped = warp_labels(source_label, solved, probs.height, probs.width)
        formats.write_confidence_map(args.out / f"{stem}{CONF_SUFFIX}", conf.scores, conf.valid)
        formats.write_label_mask(
            args.out / f"{stem}{WARP_SUFFIX}",
            LabelMask(warped, source_label.num_classes),
        )
        return stem, float(np.count_nonzero(conf.valid)) / conf.valid.size

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            outcomes = list(ex.map(lambda sp: score_one(*sp), stems))
    else:
        outcomes = [score_one(stem, path) for stem, path in stems]
    for stem, valid_fraction in outcomes:
        print(f"scored {stem} valid_fraction={valid_fraction:.6f}")
    return 0


def cmd_pseudolabel_emit(args: argparse.Namespace) -> int:
    if not args.scores.is_dir():
        raise MissingArtifactError(f"scores directory not found: {args.scores}")
    conf_paths = sorted(args.scores.glob(f"*{CONF_SUFFIX}"))
    if not conf_paths:
        raise MissingArtifactError(
            f"no '*{CONF_SUFFIX}' files in {args.scores}; run 'geomatch pseudolabel score' first"
        )
    args.out.mkdir(parents=True, exist_ok=True)

    items = []
    for conf_path in conf_paths:
        stem = conf_path.name[: -len(CONF_SUFFIX)]
        scores, valid = formats.read_confidence_map(conf_path)
        warp_path = args.scores / f"{stem}{WARP_SUFFIX}"
        warped = formats.read_label_mask(warp_path)
        if warped.labels.shape != scores.shape:
            raise UsageError(
                f"{stem}: confidence map {scores.shape} does not match warped mask "
                f"{warped.labels.shape}"
            )
        items.append((stem, ConfidenceMap(scores, valid), warped))

    if not args.per_image:
        gamma = percentile_threshold([cm for _, cm, _ in items], args.percentile)
        formats.write_keyvalues(
            args.out / "threshold.txt",
            {
                "gamma": gamma.gamma,
                "percentile": gamma.percentile,
                "samples": gamma.sample_count,
            },
        )
        print(f"gamma={gamma.gamma:.17g}")

    total_pixels = 0
    total_covered = 0
    for stem, conf, warped in items:
        if args.per_image:
            gamma = percentile_threshold([conf], args.percentile)
            formats.write_keyvalues(
                args.out / f"{stem}.threshold.txt",
                {
                    "gamma": gamma.gamma,
                    "percentile": gamma.percentile,
                    "samples": gamma.sample_count,
                },
            )
        result = threshold_warped_labels(warped.labels, conf, gamma)
        formats.write_label_mask(
            args.out / f"{stem}{PSEUDO_SUFFIX}",
            LabelMask(result.mask, warped.num_classes),
        )
        total_pixels += result.mask.size
        total_covered += int(np.count_nonzero(result.mask != IGNORE))
        print(f"coverage {stem} {result.coverage:.6f}")
    print(f"coverage total {total_covered / total_pixels:.6f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    spec = formats.read_category_spec(args.category)
    for d, name in ((args.pred, "pred"), (args.gt, "gt")):
        if not d.is_dir():
            raise MissingArtifactError(f"{name} directory not found: {d}")
    pred_names = {p.name for p in args.pred.glob("*.lmsk")}
    gt_names = {p.name for p in args.gt.glob("*.lmsk")}
    if not gt_names:
        raise MissingArtifactError(f"no '*.lmsk' files in {args.gt}")
    unmatched = sorted(pred_names ^ gt_names)
    if unmatched:
        raise MissingArtifactError(
            "unmatched prediction/ground-truth files: " + ", ".join(unmatched)
        )
    remap = formats.read_label_remap(args.remap) if args.remap else None

    acc = IoUAccumulator(spec.num_classes)
    for name in sorted(gt_names):
        pred = formats.read_label_mask(args.pred / name, spec.name)
        gt = formats.read_label_mask(args.gt / name, spec.name)
        for mask, which in ((pred, "pred"), (gt, "gt")):
            if mask.num_classes != spec.num_classes:
                raise UsageError(
                    f"{which} mask {name} has {mask.num_classes} classes, "
                    f"category '{spec.name}' defines {spec.num_classes}"
                )
        if remap:
            pred = formats.apply_label_remap(pred, remap, spec.num_classes)
            gt = formats.apply_label_remap(gt, remap, spec.num_classes)
        acc.add(pred, gt)

    report = acc.finalize(include_background=args.include_background)
    width = max(len(p) for p in spec.parts)
    print(f"{'part':<{width}}  {'IoU':>8}  {'inter':>10}  {'union':>10}")
    for idx, part in enumerate(spec.parts):
        iou = report.per_part[idx]
        iou_s = f"{iou:8.4f}" if iou is not None else "  absent"
        print(f"{part:<{width}}  {iou_s}  {report.intersection[idx]:>10}  {report.union[idx]:>10}")
    if report.miou is None:
        print("mIoU undefined (no part present)")
    else:
        print(f"mIoU {report.miou:.6f}")

    if args.summary:
        pairs: dict[str, object] = {"category": spec.name, "images": len(gt_names)}
        pairs["miou"] = report.miou if report.miou is not None else "undefined"
        for idx, part in enumerate(spec.parts):
            iou = report.per_part[idx]
            pairs[f"iou_{part}"] = iou if iou is not None else "undefined"
        formats.write_keyvalues(args.summary, pairs)
    return 0


def _sniff_magic(path: Path) -> bytes:
    if not path.exists():
        raise MissingArtifactError(f"input not found: {path}")
    with open(path, "rb") as fh:
        return fh.read(4)


def cmd_warp(args: argparse.Namespace) -> int:
    params = formats.read_tps_params(args.theta)
    solved = solve(params)
    magic = _sniff_magic(args.input)

    if magic == b"LMSK":
        mask = formats.read_label_mask(args.input)
        warped = warp_labels(mask, solved, mask.height, mask.width)
        if args.overlay:
            underlay = images.read_image(args.overlay)
            images.write_image(args.out, images.overlay_labels(underlay, warped))
        else:
            formats.write_label_mask(args.out, LabelMask(warped, mask.num_classes))
        return 0
    if args.overlay:
        raise UsageError("--overlay requires a label-mask input")
    if magic == b"FGRD":
        grid = formats.read_feature_grid(args.input)
        pts = transform_points(solved, norm_coord_grid(grid.h, grid.w))
        values, _, _ = sample_features_batch(grid, pts, with_gradient=False)
        formats.write_feature_grid(
            args.out, FeatureGrid(values.reshape(grid.h, grid.w, grid.d))
        )
        return 0
    pixels = images.read_image(args.input)
    grid = FeatureGrid(pixels.astype(np.float64))
    pts = transform_points(solved, norm_coord_grid(grid.h, grid.w))
    values, _, _ = sample_features_batch(grid, pts, with_gradient=False)
    out = np.clip(np.rint(values.reshape(grid.h, grid.w, 3)), 0, 255).astype(np.uint8)
    images.write_image(args.out, out)
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    try:
        config = DescriptorConfig(cell_size=args.cell, bins=args.bins)
    except GeomatchError as exc:
        raise UsageError(str(exc)) from exc
    grid = extract_descriptors(images.read_image(args.image), config)
    formats.write_feature_grid(args.out, grid)
    print(f"grid h={grid.h} w={grid.w} d={grid.d}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    source = formats.read_feature_grid(args.source)
    target = formats.read_feature_grid(args.target)
    rng = np.random.default_rng(args.seed)
    params = TpsParams(
        args.tps_k,
        rng.uniform(-0.2, 0.2, size=(args.tps_k * args.tps_k, 2)),
        args.tps_lambda,
    )
    analytic = matching_score_gradient(source, target, solve(params))
    numeric = finite_diff_gradient(source, target, params, step=args.step)
    scale = np.abs(numeric)
    big = scale >= GRADCHECK_TOLERANCE
    errors = np.abs(analytic - numeric)
    rel = float((errors[big] / scale[big]).max()) if big.any() else 0.0
    absolute = float(errors[~big].max()) if (~big).any() else 0.0
    print(f"max_rel_error={rel:.6e}")
    print(f"max_abs_error_small={absolute:.6e}")
    if rel > GRADCHECK_TOLERANCE or absolute > 1e-6:
        raise NumericalError(
            f"analytic gradient disagrees with finite differences "
            f"(rel {rel:.3e}, abs {absolute:.3e})"
        )
    print("gradient check passed")
    return 0


# ------------------------------------------------------------------ main

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except GeomatchError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing: {exc}", file=sys.stderr)
        return MissingArtifactError.exit_code


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
