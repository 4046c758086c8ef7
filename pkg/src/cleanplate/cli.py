"""Command line entry points: generate, inpaint, evaluate, fuse.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .config import load_config
from .errors import ConfigError, DataError, NumericalError
from .geometry import PointCloud
from .mapping import fuse_maps, stitch_map
from .metrics import evaluate, format_table
from .pipeline import run_pipeline
from .synthetic import load_scene, render_sequence

logger = logging.getLogger(__name__)


def _cmd_generate(args) -> int:
    scene = load_scene(args.scene)
    if args.seed is not None:
        scene.seed = args.seed
    capture = render_sequence(scene)
    ds.write_dataset(capture, args.out)
    print(f"wrote {len(capture.sequence)} frames to {args.out}")
    return 0


def _cmd_inpaint(args) -> int:
    config = load_config(args.config)
    result = run_pipeline(config)
    print(f"wrote results to {result.output_dir}")
    if result.metrics is not None:
        print(format_table({"ours": result.metrics}))
    return 0


def _cmd_evaluate(args) -> int:
    seq = ds.load_dataset(args.dataset)
    indices = [f.index for f in seq.frames]
    gts = ds.load_ground_truth(args.dataset, indices)
    if gts is None:
        raise DataError(f"{args.dataset}: no ground_truth/ directory")
    results = []
    for idx in indices:
        p = Path(args.results) / f"{idx:06d}.png"
        if not p.exists():
            raise DataError(f"frame {idx}: missing result image {p}")
        results.append(ds.read_image(p))
    report = evaluate(results, gts, [f.mask for f in seq.frames])
    print(format_table({"results": report}))
    if args.out:
        Path(args.out).write_text(json.dumps(report.as_dict(), indent=2))
    return 0


def _cmd_fuse(args) -> int:
    base_seq = ds.load_dataset(args.base)
    extra_seq = ds.load_dataset(args.extra)
    base_map = stitch_map(base_seq, args.voxel)
    merged, corrected, reg = fuse_maps(base_map, extra_seq, args.voxel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_ply(merged, out / "merged_map.ply")
    ds.write_poses(corrected, out / "corrected_poses.txt",
                   [f.index for f in extra_seq.frames])
    (out / "registration.json").write_text(json.dumps({
        "rms_residual_m": reg.rms_residual,
        "inlier_fraction": reg.inlier_fraction,
        "transform": reg.transform.matrix().tolist(),
    }, indent=2))
    print(f"merged map: {len(merged)} points, rms {reg.rms_residual:.4f} m")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cleanplate",
        description="Depth-guided removal of masked objects from RGB-D video",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic dataset from a scene spec")
    g.add_argument("--scene", required=True, help="scene spec JSON")
    g.add_argument("--out", required=True, help="dataset output directory")
    g.add_argument("--seed", type=int, default=None, help="override the scene seed")
    g.set_defaults(func=_cmd_generate)

    i = sub.add_parser("inpaint", help="run the inpainting pipeline")
    i.add_argument("--config", required=True, help="pipeline config JSON")
    i.set_defaults(func=_cmd_inpaint)

    e = sub.add_parser("evaluate", help="score results against dataset ground truth")
    e.add_argument("--results", required=True, help="directory of result PNGs")
    e.add_argument("--dataset", required=True, help="dataset with ground_truth/")
    e.add_argument("--out", default=None, help="also write metrics JSON here")
    e.set_defaults(func=_cmd_evaluate)

    f = sub.add_parser("fuse", help="register one dataset's map into another")
    f.add_argument("--base", required=True, help="base dataset directory")
    f.add_argument("--extra", required=True, help="dataset to register into the base")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--voxel", type=float, default=0.05, help="voxel size in meters")
    f.set_defaults(func=_cmd_fuse)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
