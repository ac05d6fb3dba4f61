"""Command-line entry points: segment, phantom, eval, bench, serve.

Exit codes: 0 success, 2 validation/usage error, 1 runtime error.
Seed coordinates are physical mm unless --voxel-coords is given.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cutbuilder import BuildConfig, RefinementSeed
from .errors import FormatError, InfeasibleCutError, ValidationError
from .evalbench import dice, run_benchmark
from .imaging import (
    Mask,
    PhantomSpec,
    load_grid,
    load_mask,
    make_phantom,
    save_grid,
    save_mask,
)
from .segmenter import SegmentationRequest, result_document, segment
from .templates import parse_template_arg

DEFAULT_BENCH_CONFIGS = "30x30,300x30,300x300"


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ValidationError(f"cannot parse coordinates {text!r}") from None


def _parse_rays(text: str):
    if "x" in text:
        lat, lon = text.split("x")
        return (int(lat), int(lon))
    return int(text)


def _to_mm(point, grid, voxel_coords: bool):
    if not voxel_coords:
        return point
    return tuple(grid.origin[a] + point[a] * grid.spacing[a]
                 for a in range(len(point)))


def _require_file(path) -> str:
    import os

    if not os.path.isfile(path):
        raise ValidationError(f"no such file: {path}")
    return str(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raycut",
        description="Interactive ray-graph min-cut segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment one image with a template")
    seg.add_argument("--image", required=True, help="input image/volume path")
    seg.add_argument("--template", required=True,
                     help="kind:size (circle:80, rectangle:40x60) or doc path")
    seg.add_argument("--seed", required=True, help="primary seed x,y[,z]")
    seg.add_argument("--refine", action="append", default=[],
                     help="refinement seed x,y[,z]; repeatable")
    seg.add_argument("--delta", type=int, default=2)
    seg.add_argument("--rays", type=str, default="30",
                     help="ray count, or LATxLON for 3D")
    seg.add_argument("--nodes", type=int, default=30)
    seg.add_argument("--mean-radius", type=float, default=4.0,
                     help="averaging ball radius, mm")
    seg.add_argument("--voxel-coords", action="store_true",
                     help="interpret --seed/--refine as voxel indices")
    seg.add_argument("--out-mask", help="write the segmentation mask here")
    seg.add_argument("--out-contour", help="write the contour document here")
    seg.add_argument("--out-result", help="write the full result document here")
    seg.add_argument("--truth", help="optional truth mask; prints DSC")

    ph = sub.add_parser("phantom", help="generate a synthetic phantom")
    ph.add_argument("--kind", required=True,
                    choices=["disc", "sphere", "rectangle", "box"])
    ph.add_argument("--dims", required=True, help="grid extent, e.g. 96,96")
    ph.add_argument("--spacing", default=None, help="mm per voxel, per axis")
    ph.add_argument("--center", default=None, help="shape center mm")
    ph.add_argument("--radius", required=True,
                    help="radius or per-axis half-extent, mm")
    ph.add_argument("--fg", type=float, default=200.0)
    ph.add_argument("--bg", type=float, default=50.0)
    ph.add_argument("--noise-sigma", type=float, default=0.0)
    ph.add_argument("--rng-seed", type=int, default=0)
    ph.add_argument("--out-image", required=True)
    ph.add_argument("--out-truth", help="write the analytic truth mask here")

    ev = sub.add_parser("eval", help="Dice overlap of two masks")
    ev.add_argument("mask_a")
    ev.add_argument("mask_b")

    be = sub.add_parser("bench", help="latency benchmark over lattice sizes")
    be.add_argument("--image", help="image to benchmark on (default: phantom)")
    be.add_argument("--template", default="rectangle:80x80",
                    help="template (default: 80 mm square, per the benchmark setup)")
    be.add_argument("--configs", default=DEFAULT_BENCH_CONFIGS,
                    help="comma list of RAYSxNODES entries")
    be.add_argument("--reps", type=int, default=10, help="repetitions, minimum 10")
    be.add_argument("--delta", type=int, default=2)
    be.add_argument("--rng-seed", type=int, default=0)
    be.add_argument("--out", help="write the JSON report here")

    sv = sub.add_parser("serve", help="run the interactive session service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return parser


def cmd_segment(args) -> int:
    grid = load_grid(_require_file(args.image))
    template = parse_template_arg(args.template)
    seed = _to_mm(_parse_point(args.seed), grid, args.voxel_coords)
    refinements = [
        RefinementSeed(f"r{i + 1}", _to_mm(_parse_point(t), grid, args.voxel_coords))
        for i, t in enumerate(args.refine)]
    cfg = BuildConfig(delta=args.delta, rays=_parse_rays(args.rays),
                      nodes_per_ray=args.nodes, mean_radius_mm=args.mean_radius)
    result = segment(SegmentationRequest(grid, template, seed, refinements, cfg))
    doc = result_document(result)
    if args.out_mask:
        save_mask(result.mask, args.out_mask)
    if args.out_contour:
        contour_doc = {k: doc[k] for k in ("contour_mm", "surface") if k in doc}
        contour_doc["boundary"] = doc["boundary"]
        with open(args.out_contour, "w") as fh:
            json.dump(contour_doc, fh, indent=1)
    if args.out_result:
        with open(args.out_result, "w") as fh:
            json.dump(doc, fh, indent=1)
    t = result.timing
    print(f"nodes {result.boundary.size * cfg.nodes_per_ray}  flow {result.flow_value:.4f}  mu {result.mu:.3f}")
    print("timing ms: " + "  ".join(
        f"{k.removesuffix('_ms')} {v:.2f}" for k, v in t.items()))
    if args.truth:
        truth = load_mask(args.truth)
        print(f"DSC {dice(result.mask, truth):.6f}")
    return 0


def cmd_phantom(args) -> int:
    dims = tuple(int(t) for t in args.dims.split(","))
    spacing = (tuple(float(t) for t in args.spacing.split(","))
               if args.spacing else (1.0,) * len(dims))
    if args.center:
        center = _parse_point(args.center)
    else:
        center = tuple((d - 1) * s / 2.0 for d, s in zip(dims, spacing))
    radius = tuple(float(t) for t in args.radius.split(","))
    spec = PhantomSpec(args.kind, center, radius, args.fg, args.bg,
                       args.noise_sigma, dims, spacing)
    grid, truth = make_phantom(spec, args.rng_seed)
    save_grid(grid, args.out_image)
    if args.out_truth:
        save_mask(truth, args.out_truth)
    print(f"phantom {args.kind} dims {dims} fg-voxels {truth.count()}")
    return 0


def cmd_eval(args) -> int:
    a = load_mask(_require_file(args.mask_a))
    b = load_mask(_require_file(args.mask_b))
    print(f"{dice(a, b):.6f}")
    return 0


def cmd_bench(args) -> int:
    if args.reps < 10:
        raise ValidationError("benchmark repetitions must be >= 10")
    configs = []
    for entry in args.configs.split(","):
        rays, _, nodes = entry.partition("x")
        if "/" in rays:  # LAT/LONxNODES for 3D
            lat, lon = rays.split("/")
            configs.append(((int(lat), int(lon)), int(nodes)))
        else:
            configs.append((int(rays), int(nodes)))
    if args.image:
        grid = load_grid(_require_file(args.image))
    else:
        spec = PhantomSpec("disc", (128.0, 128.0), (40.0,), 200.0, 50.0, 5.0,
                           (256, 256))
        grid, _ = make_phantom(spec, args.rng_seed)
    template = parse_template_arg(args.template)
    report = run_benchmark(grid, template, configs, repetitions=args.reps,
                           delta=args.delta, rng_seed=args.rng_seed)
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.as_dict(), fh, indent=1)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


_HANDLERS = {
    "segment": cmd_segment,
    "phantom": cmd_phantom,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleCutError as exc:
        ids = ", ".join(exc.seed_ids) if exc.seed_ids else "(unknown)"
        print(f"error: infeasible refinement constraints; conflicting seeds: {ids}",
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
