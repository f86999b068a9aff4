"""Command-line entry point.

Every command is driven by a JSON config file (see `ealss.config`) and is
deterministic given (config, seed, inputs): re-running produces
byte-identical output files. Machine-parsable JSON goes to stdout, human
diagnostics to stderr.

Exit codes: 0 success, 1 check failure (gradcheck, diverged training),
2 usage or validation error.

Environment:
- EALSS_THREADS: positive integer capping internal parallelism. The
  current implementation evaluates everything sequentially, so any cap is
  honored trivially and results never depend on it.
- EALSS_GRADCHECK_CORRUPT: test hook; a non-empty value corrupts one
  analytic gradient so `gradcheck` must report failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from .checks import run_gradcheck
from .config import load_config
from .eadf import eadf_pipeline
from .geometry import load_calibrations, load_point_cloud, project_multiview
from .losses import eadf_loss, fgd_loss
from .splat import splat
from .tensorio import export_stack_pgm, load_tensor, save_tensor
from .toy_head import TrainingDiverged, make_synthetic_scene, train_toy, write_trace


def _emit(obj) -> None:
    print(json.dumps(obj))


def _load_stack(path, ndim: int, what: str) -> np.ndarray:
    data = load_tensor(path).astype(np.float64)
    if data.ndim != ndim:
        raise ValueError(f"{what} tensor {path} must be {ndim}-d, got shape {data.shape}")
    return data


def cmd_project(args) -> int:
    config = load_config(args.config)
    cloud = load_point_cloud(args.points)
    calibs = load_calibrations(args.calib)
    if len(calibs) != config.shape.n_views:
        raise ValueError(
            f"calibration file has {len(calibs)} views but shape.n_views is "
            f"{config.shape.n_views}"
        )
    stack = project_multiview(
        cloud, calibs, (config.shape.height, config.shape.width),
        (config.binning.d_min, config.binning.d_max),
    )
    save_tensor(args.out, stack)
    _emit({"out": args.out, "nonzero": int(np.count_nonzero(stack))})
    return 0


def cmd_eadf(args) -> int:
    config = load_config(args.config)
    depth = _load_stack(args.depth, 3, "depth")
    result = eadf_pipeline(depth, config.eadf)
    save_tensor(args.out_dense, result.dense)
    save_tensor(args.out_edges, result.edges)
    save_tensor(args.out_fused, result.fused)
    summary = {
        "out_dense": args.out_dense,
        "out_edges": args.out_edges,
        "out_fused": args.out_fused,
        "k": config.k,
    }
    if args.export_pgm is not None:
        os.makedirs(args.export_pgm, exist_ok=True)
        written = []
        written += export_stack_pgm(depth, args.export_pgm, "depth",
                                    max_value=config.binning.d_max)
        written += export_stack_pgm(result.dense, args.export_pgm, "dense",
                                    max_value=config.binning.d_max)
        written += export_stack_pgm(result.edges, args.export_pgm, "edges",
                                    max_value=1.0)
        summary["pgm_files"] = len(written)
    _emit(summary)
    return 0


def cmd_loss(args) -> int:
    config = load_config(args.config)
    if (args.gt_sparse is None) == (args.gt_dense is None):
        raise ValueError("exactly one of --gt-sparse or --gt-dense is required")
    if args.gt_dense is not None and args.weights is None:
        raise ValueError("--gt-dense requires --weights")
    if args.gt_sparse is not None and args.weights is not None:
        raise ValueError("--weights only applies to --gt-dense")
    pred = _load_stack(args.pred, 4, "prediction")
    want_grad = args.grad is not None
    if args.gt_sparse is not None:
        gt = _load_stack(args.gt_sparse, 3, "sparse ground truth")
        report = fgd_loss(pred, gt, config.binning, config.focal, want_grad=want_grad)
    else:
        gt = _load_stack(args.gt_dense, 3, "dense ground truth")
        weights = _load_stack(args.weights, 3, "weights")
        report = eadf_loss(pred, gt, weights, config.binning, config.focal,
                           want_grad=want_grad)
    out = {"loss": report.value, "n_active": report.n_active}
    if want_grad:
        save_tensor(args.grad, report.grad)
        out["grad_file"] = args.grad
    _emit(out)
    return 0


def cmd_gradcheck(args) -> int:
    config = load_config(args.config)
    corrupt = bool(os.environ.get("EALSS_GRADCHECK_CORRUPT"))
    result = run_gradcheck(config, seed=args.seed, size=args.size, corrupt=corrupt)
    _emit(result)
    return 0 if result["pass"] else 1


def cmd_train_toy(args) -> int:
    config = load_config(args.config)
    scene = make_synthetic_scene(
        seed=config.seed, n_boxes=args.boxes, shape=config.shape.as_tuple(),
        binning=config.binning, align=config.k,
    )
    result = train_toy(
        scene, config.eadf, config.binning, config.focal,
        lr=args.lr, iters=args.iters, use_eadf=not args.no_eadf,
    )
    write_trace(args.trace, result.records)
    _emit({
        "iters": args.iters,
        "initial_total": result.initial_total,
        "final_total": result.final_total,
        "loss_ratio": (result.final_total / result.initial_total
                       if result.initial_total else 0.0),
        "accuracy": result.accuracy,
        "edge_accuracy": result.edge_accuracy,
        "trace": args.trace,
    })
    return 0


def cmd_splat(args) -> int:
    config = load_config(args.config)
    pred = _load_stack(args.pred, 4, "prediction")
    ctx = _load_stack(args.ctx, 4, "context")
    calibs = load_calibrations(args.calib)
    start = time.perf_counter()
    grid = splat(pred, ctx, calibs, config.binning, config.grid)
    elapsed = time.perf_counter() - start
    save_tensor(args.out, grid.data)
    sidecar = {
        "x_min": grid.spec.x_min, "x_max": grid.spec.x_max,
        "y_min": grid.spec.y_min, "y_max": grid.spec.y_max,
        "z_min": grid.spec.z_min, "z_max": grid.spec.z_max,
        "resolution": grid.spec.resolution, "channels": grid.channels,
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    if args.bench:
        _emit({
            "op": "splat",
            "cells": grid.spec.nx * grid.spec.ny,
            "seconds": elapsed,
            "dropped_mass": grid.dropped_mass,
        })
    else:
        _emit({"out": args.out, "dropped_mass": grid.dropped_mass})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ealss",
        description="Edge-aware depth supervision and lift-splat BEV pooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a point cloud to a depth stack")
    p.add_argument("--points", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("eadf", help="densify, edge-map, and fuse a depth stack")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dense", required=True)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-fused", required=True)
    p.add_argument("--export-pgm", metavar="DIR", default=None)
    p.set_defaults(func=cmd_eadf)

    p = sub.add_parser("loss", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt-sparse")
    p.add_argument("--gt-dense")
    p.add_argument("--weights")
    p.add_argument("--config", required=True)
    p.add_argument("--grad", metavar="OUT", default=None)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=8)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train the toy head on a synthetic scene")
    p.add_argument("--config", required=True)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--boxes", type=int, default=6)
    p.add_argument("--no-eadf", action="store_true",
                   help="drop the edge-aware term from the training total")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("splat", help="pool a lifted frustum into a BEV grid")
    p.add_argument("--pred", required=True)
    p.add_argument("--ctx", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bench", action="store_true")
    p.set_defaults(func=cmd_splat)
    return parser


def _validate_threads_env() -> None:
    raw = os.environ.get("EALSS_THREADS")
    if raw is None:
        return
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"EALSS_THREADS must be a positive integer, got {raw!r}")
    if threads < 1:
        raise ValueError(f"EALSS_THREADS must be a positive integer, got {threads}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        _validate_threads_env()
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
