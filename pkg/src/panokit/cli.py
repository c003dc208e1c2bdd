"""Command-line front end.

Every command reads files, writes files with fixed names into --output,
and prints a one-line summary, so that a run is a pure function of its
inputs and flags: two runs with the same inputs and --seed produce
byte-identical outputs. Exit codes: 0 success, 1 I/O or parse failure,
2 degenerate input, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib import (
    calibrate_extrinsics,
    calibrate_intrinsics_pinhole,
    load_board_file,
    load_corner_file,
    project_cloud,
    refine_intrinsics_ocam,
)
from .dataio import (
    DEFAULT_ANCHOR,
    DEFAULT_TOLERANCE,
    align_streams,
    keyframe_sample,
    load_manifest,
)
from .errors import (
    NonConvergence,
    ParseError,
    SingularNormalEquations,
    ToolkitError,
)
from .fusion import MipfWeights, VjcWeights, mipf_forward, vjc_forward
from .geometry import OcamIntrinsics, RigidTransform, load_camera
from .jitter import downsample, jitter_stats, load_imu_csv, moving_average
from .occupancy import (
    DEFAULT_SPEC,
    GridSpec,
    PointCloud,
    confusion,
    miou,
    read_labels,
    voxelize,
)
from .polarization import PolarizationCapture, polarization_maps, stokes_from_capture
from .tensorio import (
    atomic_write_text,
    load_bundle,
    load_cloud,
    load_pgm,
    load_tensor,
    save_raster,
    save_tensor,
)

log = logging.getLogger("panokit")

_CONFIG_KEYS = ("seed", "output", "log_level", "deterministic")


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e


def _write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_image(path):
    if str(path).endswith(".pgm"):
        return load_pgm(path)
    from .tensorio import load_raster
    return load_raster(path)


def _load_transform(path) -> RigidTransform:
    doc = _load_json(path)
    if isinstance(doc, dict) and "extrinsics" in doc:
        doc = doc["extrinsics"]
    return RigidTransform.from_json_dict(doc)


def _require_converged(result) -> None:
    term = result.report.termination
    if result.report.converged:
        return
    if term == "singular_normal_equations":
        raise SingularNormalEquations("normal equations became singular")
    raise NonConvergence(f"solver stopped without converging ({term})")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise ParseError(f"--image-size must look like 1400x1400, got {text!r}") from e


# ------------------------------------------------------------- commands


def cmd_calibrate_intrinsics(args) -> int:
    views = load_board_file(args.views)
    init_cam = load_camera(args.init) if args.init else None
    if init_cam is not None:
        size = (init_cam.width, init_cam.height)
    elif args.image_size:
        size = _parse_size(args.image_size)
    else:
        raise ParseError("either --init or --image-size is required")

    if args.model == "pinhole":
        result = calibrate_intrinsics_pinhole(views, size)
    else:
        if init_cam is None:
            raise ParseError("ocam refinement needs --init with a starting model")
        if not isinstance(init_cam.intrinsics, OcamIntrinsics):
            raise ParseError("--init camera is not an ocam model")
        result = refine_intrinsics_ocam(views, init_cam.intrinsics, size)
    _require_converged(result)
    _write_json(_out_dir(args) / "intrinsics_result.json", result.to_json_dict())
    print(f"intrinsics ({args.model}): rms {result.rms:.9f} px over "
          f"{len(views)} views, {result.report.iterations} iterations")
    return 0


def cmd_calibrate_extrinsics(args) -> int:
    obs = load_corner_file(args.corners)
    cam = load_camera(args.camera)
    T0 = _load_transform(args.init) if args.init else None
    result = calibrate_extrinsics(obs, cam, T0)
    _require_converged(result)
    _write_json(_out_dir(args) / "extrinsics_result.json", result.to_json_dict())
    print(f"extrinsics: rms {result.rms:.9f} px over "
          f"{len(result.per_frame)} frames")
    return 0


def cmd_project(args) -> int:
    points, _ = load_cloud(args.cloud)
    cam = load_camera(args.camera)
    T = _load_transform(args.extrinsics)
    pixels, depths, indices = project_cloud(points, T, cam)
    doc = {
        "pixels": np.round(pixels, 9).tolist(),
        "depths": np.round(depths, 9).tolist(),
        "indices": indices.tolist(),
        "total": int(len(points)),
        "projected": int(len(indices)),
        "dropped": int(len(points) - len(indices)),
    }
    _write_json(_out_dir(args) / "overlay.json", doc)
    print(f"projected {len(indices)} of {len(points)} points")
    return 0


def cmd_polarization(args) -> int:
    cap = PolarizationCapture(i0=_load_image(args.i0), i45=_load_image(args.i45),
                              i90=_load_image(args.i90),
                              i135=_load_image(args.i135))
    maps = polarization_maps(stokes_from_capture(cap), epsilon=args.epsilon)
    out = _out_dir(args)
    save_raster(out / "dolp.f32", maps.dolp)
    save_raster(out / "aolp.f32", maps.aolp)
    save_raster(out / "valid.f32", maps.valid.astype(np.float32))
    _write_json(out / "polarization_summary.json", {
        "clamp_violations": int(maps.clamp_violations),
        "valid_pixels": int(np.count_nonzero(maps.valid)),
        "total_pixels": int(maps.valid.size),
    })
    print(f"polarization: {np.count_nonzero(maps.valid)} of {maps.valid.size} "
          f"pixels valid, {maps.clamp_violations} clamped")
    return 0


def cmd_voxelize(args) -> int:
    points, intensity = load_cloud(args.cloud)
    spec = (GridSpec.from_json_dict(_load_json(args.grid)) if args.grid
            else DEFAULT_SPEC)
    features = None
    if intensity is not None:
        features = np.column_stack([points, intensity])
    cloud = PointCloud(points=points, intensity=intensity, features=features)
    cap = None if args.cap == 0 else args.cap
    vs = voxelize(cloud, spec, cap=cap)
    voxels = [
        {"index": list(key), "count": int(count),
         "feature": np.round(mean, 9).tolist()}
        for key, (mean, count) in sorted(vs.entries.items())
    ]
    _write_json(_out_dir(args) / "voxels.json", {
        "spec": spec.to_json_dict(),
        "cap": cap,
        "feature_width": vs.feature_width,
        "voxels": voxels,
    })
    print(f"voxelized {len(voxels)} occupied voxels from {len(points)} points")
    return 0


def cmd_eval_miou(args) -> int:
    pred = read_labels(args.pred)
    gt = read_labels(args.gt)
    cm = confusion(pred, gt)
    class_set = ([int(c) for c in args.classes.split(",")] if args.classes
                 else None)
    result = miou(cm, class_set=class_set)
    present = [c for c in result.per_class if c not in result.absent]
    # headline number averages the classes that actually occur; the
    # absent-inclusive mean is kept alongside for benchmark comparisons
    value = (float(np.mean([result.per_class[c] for c in present]))
             if present else 0.0)
    _write_json(_out_dir(args) / "miou.json", {
        "miou": value,
        "miou_including_absent": result.miou,
        "per_class": {str(c): v for c, v in result.per_class.items()},
        "absent": list(result.absent),
        "voxels_scored": cm.total,
    })
    print(f"mIoU: {value:.6f} over {len(present)} classes "
          f"({len(result.absent)} absent)")
    return 0


def cmd_jitter(args) -> int:
    series = load_imu_csv(args.imu, column=args.column)
    if args.window:
        series = moving_average(series, args.window)
    if args.downsample > 1:
        series = downsample(series, args.downsample)
    stats = jitter_stats(series)
    doc = stats.to_json_dict()
    doc["samples"] = len(series)
    doc["rate"] = series.rate
    _write_json(_out_dir(args) / "jitter_stats.json", doc)
    dom = ("none" if stats.dominant_frequency is None
           else f"{stats.dominant_frequency:.6f} Hz")
    print(f"jitter: rms {stats.rms:.9f}, peak-to-peak "
          f"{stats.peak_to_peak:.9f}, dominant {dom}")
    return 0


def cmd_fusion_vjc(args) -> int:
    F = load_tensor(args.features)
    weights = VjcWeights.from_bundle(load_bundle(args.weights))
    fused, raw = vjc_forward(F, weights)
    out = _out_dir(args)
    save_tensor(out / "fused.f32", fused)
    _write_json(out / "vjc_offset.json", {
        "raw_offset": raw,
        "normalized_offset": 2.0 * raw / F.shape[1],
    })
    print(f"vjc: raw offset {raw:.9f} px on a "
          f"{F.shape[0]}x{F.shape[1]}x{F.shape[2]} map")
    return 0


def cmd_fusion_mipf(args) -> int:
    F_l = load_tensor(args.lidar)
    F_pal = load_tensor(args.pal)
    F_th = load_tensor(args.thermal)
    F_pol = load_tensor(args.polar)
    weights = MipfWeights.from_bundle(load_bundle(args.weights),
                                      heads=args.heads)
    fused = mipf_forward(F_l, F_pal, F_th, F_pol, weights)
    save_tensor(_out_dir(args) / "fused.f32", fused)
    print(f"mipf: fused {fused.shape[0]} channels over "
          f"{fused.shape[1]}x{fused.shape[2]} cells with {args.heads} heads")
    return 0


def cmd_align(args) -> int:
    manifest = load_manifest(args.manifest)
    frames = align_streams(list(manifest.streams.values()),
                           anchor=args.anchor, tolerance=args.tolerance)
    if args.stride > 1:
        frames = keyframe_sample(frames, args.stride)
    rows = []
    for f in frames:
        matches = {}
        for name, (entry, offset) in f.matches.items():
            matches[name] = {"t": entry.timestamp_str, "path": entry.path,
                             "offset": round(offset, 9)}
        rows.append({"t": f.matches[args.anchor][0].timestamp_str,
                     "matches": matches})
    _write_json(_out_dir(args) / "alignment.json", {
        "sequence_id": manifest.sequence_id,
        "anchor": args.anchor,
        "tolerance": args.tolerance,
        "stride": args.stride,
        "frames": rows,
    })
    print(f"aligned {len(rows)} frames on {args.anchor!r}")
    return 0


def cmd_serve(args) -> int:
    from .server import create_app
    import uvicorn

    # fail fast with a plain message instead of a uvicorn stack trace
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    finally:
        probe.close()

    app = create_app(Path(args.data), static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port,
                log_level=args.log_level)
    return 0


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="panokit",
        description="Panoramic multimodal perception toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", default=None,
                   help="JSON file with defaults for the global flags")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for any stochastic step (default 0)")
    p.add_argument("--deterministic", action="store_true",
                   help="force reproducible output for identical inputs")
    p.add_argument("--output", default=".",
                   help="directory for output files (created if missing)")
    p.add_argument("--log-level", default="warning",
                   choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("calibrate-intrinsics",
                        help="fit camera intrinsics from checkerboard views")
    sp.add_argument("--views", required=True, help="board observation JSON")
    sp.add_argument("--model", required=True, choices=["pinhole", "ocam"])
    sp.add_argument("--init", help="camera JSON with the starting model")
    sp.add_argument("--image-size", help="sensor size as WxH")
    sp.set_defaults(func=cmd_calibrate_intrinsics)

    sp = sub.add_parser("calibrate-extrinsics",
                        help="fit the LiDAR-to-camera transform from corners")
    sp.add_argument("--corners", required=True, help="corner pair JSON")
    sp.add_argument("--camera", required=True, help="camera JSON")
    sp.add_argument("--init", help="starting transform JSON")
    sp.set_defaults(func=cmd_calibrate_extrinsics)

    sp = sub.add_parser("project",
                        help="project a point cloud into a camera")
    sp.add_argument("--cloud", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--extrinsics", required=True)
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("polarization",
                        help="DoLP/AoLP maps from four polarizer angles")
    sp.add_argument("--i0", required=True)
    sp.add_argument("--i45", required=True)
    sp.add_argument("--i90", required=True)
    sp.add_argument("--i135", required=True)
    sp.add_argument("--epsilon", type=float, default=None,
                    help="dark-pixel threshold on S0")
    sp.set_defaults(func=cmd_polarization)

    sp = sub.add_parser("voxelize", help="bucket a cloud into grid voxels")
    sp.add_argument("--cloud", required=True)
    sp.add_argument("--grid", help="grid spec JSON (defaults to 64x64x16)")
    sp.add_argument("--cap", type=int, default=10,
                    help="max points kept per voxel, 0 for unlimited")
    sp.set_defaults(func=cmd_voxelize)

    sp = sub.add_parser("eval-miou",
                        help="confusion matrix and mIoU between label grids")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--classes", help="comma-separated class ids")
    sp.set_defaults(func=cmd_eval_miou)

    sp = sub.add_parser("jitter", help="oscillation statistics from IMU CSV")
    sp.add_argument("--imu", required=True)
    sp.add_argument("--column", default="az")
    sp.add_argument("--window", type=int, default=0,
                    help="odd moving-average window (0 to skip)")
    sp.add_argument("--downsample", type=int, default=1)
    sp.set_defaults(func=cmd_jitter)

    sp = sub.add_parser("fusion", help="feature-map fusion operators")
    fsub = sp.add_subparsers(dest="variant", required=True)
    fv = fsub.add_parser("vjc", help="vertical jitter compensation")
    fv.add_argument("--features", required=True, help="(C,H,W) tensor")
    fv.add_argument("--weights", required=True, help="weight bundle")
    fv.set_defaults(func=cmd_fusion_vjc)
    fm = fsub.add_parser("mipf", help="modality-interactive prompt fusion")
    fm.add_argument("--lidar", required=True)
    fm.add_argument("--pal", required=True)
    fm.add_argument("--thermal", required=True)
    fm.add_argument("--polar", required=True)
    fm.add_argument("--weights", required=True)
    fm.add_argument("--heads", type=int, default=8)
    fm.set_defaults(func=cmd_fusion_mipf)

    sp = sub.add_parser("align",
                        help="nearest-timestamp alignment of a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--anchor", default=DEFAULT_ANCHOR)
    sp.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    sp.add_argument("--stride", type=int, default=1,
                    help="keep every stride-th aligned frame")
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("serve", help="HTTP service for the annotator UI")
    sp.add_argument("--data", required=True, help="dataset root directory")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8787)
    sp.add_argument("--static", default=None,
                    help="directory of UI files to serve at /")
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)

    parser = build_parser()
    if known.config:
        try:
            cfg = _load_json(known.config)
        except (ToolkitError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        bad = set(cfg) - set(_CONFIG_KEYS)
        if bad:
            print(f"error: {known.config}: unknown config keys "
                  f"{sorted(bad)} (allowed: {list(_CONFIG_KEYS)})",
                  file=sys.stderr)
            return 1
        parser.set_defaults(**cfg)

    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
        return 0 if rc is None else rc
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
