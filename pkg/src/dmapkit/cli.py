"""Command-line interface: synthesize, render, analyze, sweep, evaluate,
compare.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage errors.
Every subcommand is deterministic given its flags and --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import cca_t, count_iodm, default_sweep_grid, sweep_threshold
from .evaluation import evaluate_manifest, report_to_json, report_to_table
from .grid import (
    FormatError,
    PointSet,
    make_kernel,
    read_density_map,
    read_manifest,
    read_points,
    write_density_map,
    write_points,
)
from .gaussian import render_density_map
from .localization import analyze_dma
from .synthesis import (
    NoiseConfig,
    PRESET_NAMES,
    SceneConfig,
    generate_dataset,
    preset_scene,
)

from dataclasses import replace


def _parse_dims(text: str) -> tuple:
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected e.g. 256x256")
    if len(dims) not in (2, 3) or any(n <= 0 for n in dims):
        raise argparse.ArgumentTypeError(f"bad dims {text!r}")
    return dims


def _parse_range(text: str) -> tuple:
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, expected lo,hi")
    return (lo, hi)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    parser.add_argument("--sigma", type=float, default=2.0,
                        help="kernel std in px (default 2)")
    parser.add_argument("--sigma-z", type=float, default=None,
                        help="z std for 3D kernels (default: same as --sigma)")
    parser.add_argument("--connectivity", choices=("full", "face"), default="full")
    parser.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmapkit",
        description="Count and localize objects in Gaussian density maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--dims", type=_parse_dims, help="e.g. 256x256 or 64x128x128")
    p.add_argument("--n-mean", type=float, help="mean object count")
    p.add_argument("--n-std", type=float, default=0.0)
    p.add_argument("--overlap", type=_parse_range, default=None,
                   help="overlap fraction range lo,hi (default 0,0.5)")
    p.add_argument("--min-separation", type=float, default=None,
                   help="clearance between non-paired objects, sigma units")
    p.add_argument("--margin", type=float, default=None,
                   help="border clearance, sigma units")
    p.add_argument("--gain-jitter", type=float, default=None)
    p.add_argument("--bump-rate", type=float, default=None,
                   help="background bumps per kilopixel")
    p.add_argument("--white-noise", type=float, default=None)
    p.add_argument("--blur", type=float, default=None)
    p.add_argument("--clean", action="store_true",
                   help="no corruption; predicted maps equal ground truth")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("render", help="render a density map from points")
    _add_common(p)
    p.add_argument("--points", required=True)
    p.add_argument("--dims", type=_parse_dims, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="count and localize one density map")
    _add_common(p)
    p.add_argument("--method", choices=("dma", "cca-t", "iodm"), required=True)
    p.add_argument("--input", required=True, help="DMAP file")
    p.add_argument("--threshold", type=float, help="density threshold for cca-t")
    p.add_argument("--samples-per-object", type=int, default=2000)
    p.add_argument("--out-centers", help="centers CSV path (default <input>.centers.csv)")

    p = sub.add_parser("sweep", help="sweep the CCA-T threshold on a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--grid-size", type=int, default=32)
    p.add_argument("--sweep-objective", choices=("f1", "mae"), default="f1")

    p = sub.add_parser("evaluate", help="evaluate methods against ground truth")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", default="dma",
                   help="comma list: dma, iodm, cca-t@T (default dma)")
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--samples-per-object", type=int, default=2000)
    p.add_argument("--macro", action="store_true",
                   help="also report per-image macro averages")
    p.add_argument("--out-json")
    p.add_argument("--out-table")

    p = sub.add_parser("compare", help="sweep CCA-T, then run all three methods")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--samples-per-object", type=int, default=2000)
    p.add_argument("--sweep-objective", choices=("f1", "mae"), default="f1")
    p.add_argument("--macro", action="store_true")
    p.add_argument("--out-json")
    p.add_argument("--out-table")

    return parser


def _kernel_for(args, ndim: int):
    return make_kernel(ndim, args.sigma, args.sigma_z)


def _scene_from_args(args, parser) -> SceneConfig:
    if args.preset:
        scene = preset_scene(args.preset)
        overrides = {}
        if args.dims:
            overrides["dims"] = args.dims
        if args.n_mean is not None:
            overrides["n_mean"] = args.n_mean
        if args.overlap is not None:
            overrides["overlap_fraction_range"] = args.overlap
        if args.min_separation is not None:
            overrides["min_separation"] = args.min_separation
        if args.margin is not None:
            overrides["margin"] = args.margin
        return replace(scene, **overrides) if overrides else scene
    if args.dims is None or args.n_mean is None:
        parser.error("synth requires --preset or both --dims and --n-mean")
    kernel = _kernel_for(args, len(args.dims))
    extra = {}
    if args.overlap is not None:
        extra["overlap_fraction_range"] = args.overlap
    if args.min_separation is not None:
        extra["min_separation"] = args.min_separation
    if args.margin is not None:
        extra["margin"] = args.margin
    return SceneConfig(
        dims=args.dims, kernel=kernel, n_mean=args.n_mean, n_std=args.n_std,
        **extra,
    )


def _noise_from_args(args) -> NoiseConfig:
    if args.clean:
        return NoiseConfig.zero()
    noise = NoiseConfig()
    overrides = {}
    if args.gain_jitter is not None:
        overrides["gain_jitter"] = args.gain_jitter
    if args.bump_rate is not None:
        overrides["bump_rate_per_kilopixel"] = args.bump_rate
    if args.white_noise is not None:
        overrides["white_noise_std"] = args.white_noise
    if args.blur is not None:
        overrides["smoothing"] = args.blur
    return replace(noise, **overrides) if overrides else noise


def _cmd_synth(args, parser) -> int:
    scene = _scene_from_args(args, parser)
    noise = _noise_from_args(args)
    generate_dataset(scene, noise, args.n, args.seed, args.out,
                     threads=args.threads)
    manifest_path = Path(args.out) / "manifest.tsv"
    print(manifest_path)
    return 0


def _cmd_render(args, parser) -> int:
    points = read_points(args.points)
    if points.ndim != len(args.dims):
        raise ValueError(
            f"{args.points}: {points.ndim}D points for {len(args.dims)}D dims"
        )
    kernel = _kernel_for(args, len(args.dims))
    dmap = render_density_map(points, kernel, args.dims)
    write_density_map(dmap, args.out)
    print(args.out)
    return 0


def _cmd_analyze(args, parser) -> int:
    dmap = read_density_map(args.input)
    out_centers = args.out_centers or str(Path(args.input).with_suffix(".centers.csv"))
    if args.method == "iodm":
        print(f"count: {count_iodm(dmap):.3f}")
        return 0
    kernel = _kernel_for(args, dmap.ndim)
    if args.method == "cca-t":
        if args.threshold is None:
            parser.error("analyze --method cca-t requires --threshold")
        result = cca_t(dmap, args.threshold, args.connectivity)
        write_points(result.centers, out_centers)
        print(f"count: {result.count}")
        return 0
    result, centers = analyze_dma(
        dmap, kernel, seed=args.seed,
        samples_per_object=args.samples_per_object,
        connectivity=args.connectivity,
    )
    write_points(centers, out_centers)
    chosen = result.selection.chosen_t
    chosen_text = "none" if chosen is None else f"{chosen:.6g}"
    print(f"count: {result.total_count} (threshold {chosen_text})")
    return 0


def _cmd_sweep(args, parser) -> int:
    manifest = read_manifest(args.manifest)
    ndim = read_density_map(manifest.entries[0].pred_density_path).ndim
    kernel = _kernel_for(args, ndim)
    result = sweep_threshold(
        manifest, kernel,
        thresholds=default_sweep_grid(kernel, args.grid_size),
        radius=args.radius, objective=args.sweep_objective,
        connectivity=args.connectivity,
    )
    label = "F" if result.objective == "f1" else "MAE"
    print(f"best threshold: {result.best_threshold:.6g} "
          f"({label}={result.best_value:.4f})")
    return 0


def _emit_report(report, args) -> None:
    table = report_to_table(report)
    if args.out_json:
        Path(args.out_json).write_text(report_to_json(report) + "\n")
    if args.out_table:
        Path(args.out_table).write_text(table + "\n")
    print(table)


def _cmd_evaluate(args, parser) -> int:
    manifest = read_manifest(args.manifest)
    ndim = read_density_map(manifest.entries[0].pred_density_path).ndim
    kernel = _kernel_for(args, ndim)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = evaluate_manifest(
        manifest, kernel, methods, radius=args.radius, seed=args.seed,
        samples_per_object=args.samples_per_object,
        connectivity=args.connectivity, include_macro=args.macro,
        threads=args.threads,
    )
    _emit_report(report, args)
    return 0


def _cmd_compare(args, parser) -> int:
    manifest = read_manifest(args.manifest)
    ndim = read_density_map(manifest.entries[0].pred_density_path).ndim
    kernel = _kernel_for(args, ndim)
    sweep = sweep_threshold(
        manifest, kernel, radius=args.radius,
        objective=args.sweep_objective, connectivity=args.connectivity,
    )
    print(f"CCA-T swept threshold: {sweep.best_threshold:.6g}")
    report = evaluate_manifest(
        manifest, kernel,
        ["iodm", f"cca-t@{sweep.best_threshold!r}", "dma"],
        radius=args.radius, seed=args.seed,
        samples_per_object=args.samples_per_object,
        connectivity=args.connectivity, include_macro=args.macro,
        threads=args.threads,
    )
    _emit_report(report, args)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "render": _cmd_render,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except (FormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
