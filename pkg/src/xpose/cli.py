"""Command-line entry point.

stdout carries machine-readable JSON only; human-readable logs go to stderr.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
from scipy.spatial.transform import Rotation

from . import eval as evalmod
from . import graph as graphmod
from . import mockserver, pngio, synth
from .config import build_pipeline_config
from .errors import XposeError
from .match import estimate_pair

logger = logging.getLogger(__name__)


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout)
    sys.stdout.write("\n")
    sys.stdout.flush()


def _fail(exc: Exception) -> int:
    logger.error("%s", exc)
    _emit({"error": str(exc), "kind": getattr(exc, "kind", type(exc).__name__)})
    return 1


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--backend", choices=["oracle", "mock", "remote"])
    p.add_argument("--s-v", type=int, dest="s_v")
    p.add_argument("--n-views", type=int, dest="n_views")
    p.add_argument("--refine-iters", type=int, dest="refine_iters")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--endpoint", help="bridge service endpoint (remote backend)")


def _pipeline_config(args):
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "backend",
            "s_v",
            "n_views",
            "refine_iters",
            "seed",
            "workers",
            "endpoint",
        )
    }
    return build_pipeline_config(args.config, overrides)


def _generator_for(config, entry, K1, mask1, pose1):
    factory = evalmod.default_generator_factory(config)
    return factory(entry, K1, mask1, pose1)


def cmd_synth(args) -> int:
    manifest = synth.gen_dataset(
        n_pairs=args.pairs,
        seed=args.seed,
        min_separation_deg=args.min_sep,
        out_dir=args.out,
        inplane_max_deg=args.inplane_max,
    )
    _emit(
        {
            "manifest": f"{args.out}/manifest.json",
            "pairs": len(manifest.entries),
        }
    )
    return 0


def cmd_estimate(args) -> int:
    config = _pipeline_config(args)
    manifest = synth.load_manifest(args.manifest)
    by_id = {e.pair_id: e for e in manifest.entries}
    if args.pair not in by_id:
        print(f"error: pair {args.pair!r} not in manifest", file=sys.stderr)
        return 2
    entry = by_id[args.pair]
    root = manifest.root
    img1 = pngio.load_image(os.path.join(root, entry.images[0]))
    img2 = pngio.load_image(os.path.join(root, entry.images[1]))
    mask1 = pngio.load_mask(os.path.join(root, entry.masks[0]))
    mask2 = pngio.load_mask(os.path.join(root, entry.masks[1]))
    K1, K2 = entry.intrinsics
    generator = _generator_for(config, entry, K1, mask1, entry.poses[0])
    estimate = estimate_pair(img1, mask1, K1, img2, mask2, K2, config, generator)

    quat = Rotation.from_matrix(estimate.relative.rotation).as_quat()
    if quat[3] < 0:
        quat = -quat
    t = estimate.relative.translation
    direction = (t / np.linalg.norm(t)).tolist() if np.linalg.norm(t) > 1e-12 else None
    doc = {
        "pair": entry.pair_id,
        "rotation_quat_xyzw": quat.tolist(),
        "translation_dir": direction,
        "diagnostics": estimate.diagnostics,
    }
    gt = synth.relative_pose_gt(entry)
    doc["rot_err_deg"] = evalmod.rotation_error_deg(
        gt.rotation, estimate.relative.rotation
    )
    try:
        doc["trans_err_deg"] = evalmod.translation_angle_deg(
            gt.translation, estimate.relative.translation
        )
    except XposeError:
        doc["trans_err_deg"] = None
    _emit(doc)
    return 0


def cmd_eval(args) -> int:
    config = _pipeline_config(args)
    manifest = synth.load_manifest(args.manifest)
    report = evalmod.run_benchmark(
        manifest, config, dilation_percent=args.dilate, report_path=args.report
    )
    _emit(report.to_json_dict())
    return 0


def cmd_graph_opt(args) -> int:
    g = graphmod.load_graph(args.graph)
    result = graphmod.optimize(g, max_iters=args.max_iters, damping=args.damping)
    graphmod.save_graph(result.graph, args.out)
    _emit(
        {
            "initial_residual": result.residual_history[0],
            "final_residual": result.residual_history[-1],
            "accepted_steps": len(result.residual_history) - 1,
            "out": args.out,
        }
    )
    return 0


def cmd_serve_mock(args) -> int:
    mockserver.serve_forever(args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xpose",
        description="Extreme two-view pose estimation toolkit",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-view dataset")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--min-sep", type=float, default=120.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--inplane-max", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the relative pose of one pair")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pair", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="run the benchmark over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dilate", type=float, default=0.0)
    p.add_argument("--report", help="write the report JSON here")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("graph-opt", help="optimize a pose graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--damping", type=float, default=1e-3)
    p.set_defaults(func=cmd_graph_opt)

    p = sub.add_parser("serve-mock", help="run the mock generator service")
    p.add_argument("--port", type=int, default=8639)
    p.set_defaults(func=cmd_serve_mock)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "synth" and args.pairs < 1:
        parser.error("--pairs must be at least 1")
    if args.command == "eval" and args.dilate < 0:
        parser.error("--dilate must be >= 0")
    try:
        return args.func(args)
    except XposeError as exc:
        return _fail(exc)
    except (OSError, ValueError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
