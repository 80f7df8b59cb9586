"""Command-line pipeline: synth, render, reconstruct, carve, eval, gradcheck.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error (bad
arguments or argument combinations).  Errors print a single diagnostic
line to standard error; success paths print nothing there.

Every file-producing command also writes a JSON run manifest with all
resolved arguments; ``voxsil replay <manifest>`` re-runs the recorded
command and reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, io
from .errors import DivergenceError
from .geometry import build_rig, default_rig, rig_sampling_grids
from .oracle import grad_check
from .projector import backend_name, project, set_num_threads
from .recon import LossConfig, ReconConfig, projection_loss, reconstruct
from .volume import SHAPE_KINDS, binarize, iou, synth_shape, visual_hull

GRADCHECK_MAX_DIM = 8
GRADCHECK_IMAGE = 4
GRADCHECK_TOLERANCE = 1e-3


class UsageError(ValueError):
    """Bad argument or argument combination; maps to exit code 2."""


def _parse_dims(text) -> tuple[int, int, int]:
    if isinstance(text, int):
        return (text,) * 3
    parts = str(text).split(",")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad dims {text!r}: expected N or H,W,D") from None
    if len(values) == 1:
        values = values * 3
    if len(values) != 3 or any(v < 1 for v in values):
        raise UsageError(f"bad dims {text!r}: expected N or H,W,D with positive values")
    return tuple(values)  # type: ignore[return-value]


def _parse_views(text, num_views: int) -> list[int]:
    """Parse a view subset like '0-7' or '0,3,6,9' (ranges are inclusive)."""
    indices: list[int] = []
    for chunk in str(text).split(","):
        chunk = chunk.strip()
        try:
            if "-" in chunk:
                lo_text, hi_text = chunk.split("-", 1)
                lo, hi = int(lo_text), int(hi_text)
                if hi < lo:
                    raise ValueError
                indices.extend(range(lo, hi + 1))
            else:
                indices.append(int(chunk))
        except ValueError:
            raise UsageError(
                f"bad view subset {text!r}: expected indices like '0-7' or '0,3,6'"
            ) from None
    for i in indices:
        if not 0 <= i < num_views:
            raise UsageError(f"view index {i} out of range for a {num_views}-view rig")
    return indices


def _load_rig(spec: str):
    if spec == "default24":
        return default_rig()
    return io.load_rig(spec)


def _apply_threads(args: dict) -> None:
    threads = args.get("threads")
    if threads is not None:
        set_num_threads(threads)


def _write_manifest(args: dict, command: str, inputs, outputs, default_path) -> None:
    path = args.get("manifest") or default_path
    if path is None:
        return
    recorded = {
        k: v for k, v in args.items() if k not in ("command", "manifest")
    }
    io.save_manifest(
        path,
        {
            "tool": "voxsil",
            "version": __version__,
            "backend": backend_name(),
            "command": command,
            "args": recorded,
            "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in outputs],
        },
    )


def cmd_synth(args: dict) -> int:
    kind = args["kind"]
    if kind not in SHAPE_KINDS:
        raise UsageError(f"unknown kind: {kind} (choose from {', '.join(SHAPE_KINDS)})")
    dims = _parse_dims(args["dims"])
    if any(v < 8 for v in dims):
        raise UsageError(f"synth dims must be >= 8, got {dims}")
    out = args["out"]
    io.save_voxg(out, synth_shape(kind, dims))
    _write_manifest(args, "synth", [], [out], f"{out}.manifest.json")
    return 0


def cmd_render(args: dict) -> int:
    _apply_threads(args)
    volume = io.load_voxg(args["vol"])
    rig = _load_rig(args["rig"])
    size = args["image_size"]
    views = build_rig(rig, size, size, focal=args.get("focal"))
    grids = rig_sampling_grids(views, volume.dims, depth_slices=args.get("depth_slices"))

    out_dir = Path(args["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, (vp, grid) in enumerate(zip(rig, grids)):
        sil, _ = project(volume, grid)
        path = out_dir / io.silhouette_name(i, math.degrees(vp.azimuth))
        io.save_pgm(path, sil)
        outputs.append(path)
    _write_manifest(
        args, "render", [args["vol"]], outputs, out_dir / "render.manifest.json"
    )
    return 0


def _load_silhouettes(sil_dir, rig):
    paths = io.silhouette_paths(sil_dir, len(rig))
    sils = [io.load_pgm(p) for p in paths]
    shapes = {s.shape for s in sils}
    if len(shapes) != 1:
        raise ValueError(f"{sil_dir}: silhouettes disagree on image size: {shapes}")
    return sils, paths


def cmd_reconstruct(args: dict) -> int:
    _apply_threads(args)
    if args["lambda_vol"] > 0.0 and not args.get("gt"):
        raise UsageError("--lambda-vol > 0 requires --gt")
    rig = _load_rig(args["rig"])
    sils, sil_paths = _load_silhouettes(args["sil_dir"], rig)
    dims = _parse_dims(args["dims"])

    img_h, img_w = sils[0].shape
    views = build_rig(rig, img_w, img_h, focal=args.get("focal"))
    grids = rig_sampling_grids(views, dims, depth_slices=args.get("depth_slices"))

    subset = _parse_views(args["views"], len(rig)) if args.get("views") else None
    reference = None
    if args.get("gt"):
        reference = io.load_voxg(args["gt"])
        if reference.dims != dims:
            raise ValueError(
                f"--gt dims {reference.dims} do not match --dims {dims}"
            )
    config = ReconConfig(
        iterations=args["iters"],
        loss=LossConfig(args["lambda_proj"], args["lambda_vol"]),
        lr=args["lr"],
        init_logit=args["init_logit"],
        view_subset=subset,
        seed=args["seed"],
    )
    result = reconstruct(sils, grids, config, reference)

    out = args["out"]
    loss_csv = f"{out}.loss.csv"
    io.save_voxg(out, result.volume)
    io.save_loss_csv(loss_csv, result.history)
    inputs = list(sil_paths) + ([args["gt"]] if args.get("gt") else [])
    _write_manifest(args, "reconstruct", inputs, [out, loss_csv], f"{out}.manifest.json")
    return 0


def cmd_carve(args: dict) -> int:
    _apply_threads(args)
    rig = _load_rig(args["rig"])
    sils, sil_paths = _load_silhouettes(args["sil_dir"], rig)
    dims = _parse_dims(args["dims"])
    img_h, img_w = sils[0].shape
    views = build_rig(rig, img_w, img_h, focal=args.get("focal"))
    hull = visual_hull(
        sils,
        [v.transform for v in views],
        dims,
        [v.disparity_range for v in views],
    )
    out = args["out"]
    io.save_voxg(out, hull.astype(np.float64))
    _write_manifest(args, "carve", sil_paths, [out], f"{out}.manifest.json")
    return 0


def cmd_eval(args: dict) -> int:
    _apply_threads(args)
    pred = io.load_voxg(args["pred"])
    gt = io.load_voxg(args["gt"])
    threshold = args["threshold"]
    score = iou(binarize(pred, threshold), binarize(gt, threshold))
    print(f"iou_3d={score:.6f}")

    outputs = []
    if args.get("rig"):
        if not args.get("report"):
            raise UsageError("--rig requires --report for the per-view CSV")
        rig = _load_rig(args["rig"])
        size = args["image_size"]
        views = build_rig(rig, size, size, focal=args.get("focal"))
        grids = rig_sampling_grids(views, pred.dims)
        report_path = args["report"]
        with open(report_path, "w", encoding="ascii", newline="") as fh:
            fh.write("view,azimuth_deg,iou_2d\n")
            for i, (vp, grid) in enumerate(zip(rig, grids)):
                sil_pred = project(pred, grid)[0] >= 0.5
                sil_gt = project(gt, grid)[0] >= 0.5
                union = np.count_nonzero(sil_pred | sil_gt)
                view_iou = (
                    1.0
                    if union == 0
                    else np.count_nonzero(sil_pred & sil_gt) / union
                )
                fh.write(f"{i},{math.degrees(vp.azimuth):g},{view_iou!r}\n")
        outputs.append(report_path)
    default_manifest = f"{args['report']}.manifest.json" if args.get("report") else None
    _write_manifest(args, "eval", [args["pred"], args["gt"]], outputs, default_manifest)
    return 0


def cmd_gradcheck(args: dict) -> int:
    dims = _parse_dims(args["dims"])
    if any(v > GRADCHECK_MAX_DIM for v in dims):
        raise UsageError(
            f"gradcheck dims must be <= {GRADCHECK_MAX_DIM} per axis "
            f"(the finite-difference oracle is O(voxels^2)), got {dims}"
        )
    num_views = args["views"]
    if num_views < 1:
        raise UsageError("--views must be >= 1")

    rig = default_rig()[:num_views]
    views = build_rig(rig, GRADCHECK_IMAGE, GRADCHECK_IMAGE)
    grids = rig_sampling_grids(views, dims, depth_slices=GRADCHECK_IMAGE)

    rng = np.random.default_rng(args["seed"])
    volume = rng.random(dims)
    targets = [rng.random((GRADCHECK_IMAGE, GRADCHECK_IMAGE)) for _ in grids]

    report = grad_check(
        volume,
        grids,
        lambda v: projection_loss(v, targets, grids),
        h=args["h"],
        tie_eps=args["tie_eps"],
        emit=True,
    )
    _write_manifest(args, "gradcheck", [], [], None)
    if not report.max_rel_err < GRADCHECK_TOLERANCE:
        raise RuntimeError(
            f"gradient check failed: max_rel_err={report.max_rel_err:.3e} "
            f">= {GRADCHECK_TOLERANCE}"
        )
    return 0


def cmd_bench(args: dict) -> int:
    report = bench.run_benchmark(
        vol_dim=args["dims"],
        image_size=args["image_size"],
        num_views=1,
        repeats=args["repeats"],
        num_threads=args.get("threads") or os.cpu_count() or 1,
    )
    print(bench.format_report(report))
    if not report["backends_match"]:
        raise RuntimeError("backends disagree on the benchmark workload")
    return 0


def cmd_replay(args: dict) -> int:
    manifest = io.load_manifest(args["path"])
    command = manifest["command"]
    if command not in _HANDLERS or command == "replay":
        raise ValueError(f"{args['path']}: cannot replay command {command!r}")
    return _HANDLERS[command](dict(manifest["args"]))


_HANDLERS = {
    "synth": cmd_synth,
    "render": cmd_render,
    "reconstruct": cmd_reconstruct,
    "carve": cmd_carve,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "replay": cmd_replay,
}


def _add_threads_and_manifest(p, manifest=True):
    p.add_argument("--threads", type=int, default=None, help="bound kernel parallelism")
    if manifest:
        p.add_argument("--manifest", default=None, help="override the manifest path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsil",
        description="Voxel-to-silhouette rendering and silhouette-based reconstruction.",
    )
    parser.add_argument("--version", action="version", version=f"voxsil {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic test shape as VOXG")
    p.add_argument("--kind", required=True, help=f"one of: {', '.join(SHAPE_KINDS)}")
    p.add_argument("--dims", required=True, help="N or H,W,D (each >= 8)")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None, help="override the manifest path")

    p = sub.add_parser("render", help="render silhouette PGMs for a camera rig")
    p.add_argument("--vol", required=True, help="input VOXG volume")
    p.add_argument("--rig", default="default24", help="rig file or 'default24'")
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--focal", type=float, default=None, help="override the default focal")
    p.add_argument("--depth-slices", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    _add_threads_and_manifest(p)

    p = sub.add_parser("reconstruct", help="recover a volume from silhouettes")
    p.add_argument("--sil-dir", required=True, help="directory of rendered PGMs")
    p.add_argument("--rig", default="default24")
    p.add_argument("--dims", required=True, help="output volume dims, N or H,W,D")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lambda-proj", type=float, default=1.0)
    p.add_argument("--lambda-vol", type=float, default=0.0)
    p.add_argument("--gt", default=None, help="reference VOXG (needed when --lambda-vol > 0)")
    p.add_argument("--views", default=None, help="view subset, e.g. '0-7' or '0,3,6,9'")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--init-logit", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--focal", type=float, default=None)
    p.add_argument("--depth-slices", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_threads_and_manifest(p)

    p = sub.add_parser("carve", help="space-carve a visual hull from silhouettes")
    p.add_argument("--sil-dir", required=True)
    p.add_argument("--rig", default="default24")
    p.add_argument("--dims", required=True)
    p.add_argument("--focal", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_threads_and_manifest(p)

    p = sub.add_parser("eval", help="3D IoU (and per-view 2D IoU) between volumes")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--rig", default=None, help="also report per-view silhouette IoU")
    p.add_argument("--report", default=None, help="CSV path for the per-view report")
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--focal", type=float, default=None)
    _add_threads_and_manifest(p)

    p = sub.add_parser("gradcheck", help="check analytic gradients on a random volume")
    p.add_argument("--dims", default="5", help=f"N or H,W,D (each <= {GRADCHECK_MAX_DIM})")
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--tie-eps", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None)

    p = sub.add_parser("bench", help="compare compiled and fallback kernels")
    p.add_argument("--dims", type=int, default=32)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("path", help="manifest JSON written by a previous run")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = _HANDLERS[args.command]
    try:
        return handler(vars(args))
    except UsageError as exc:
        print(f"voxsil: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"voxsil: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"voxsil: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
