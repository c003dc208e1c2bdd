#!/usr/bin/env python3
"""Generate a self-contained playground dataset for the panokit CLI.

Writes synthetic inputs for every command into one directory: a pinhole
and an ocam camera with checkerboard views, whiteboard corner
correspondences, a point cloud, a polarization quad, occupancy label
grids, an IMU trace, fusion weight bundles with matching feature maps, a
stream manifest, and an annotation dataset for `panokit serve`.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from panokit.calib import save_board_file, save_corner_file
from panokit.fusion import MODALITY_ORDER, MipfWeights, VjcWeights
from panokit.geometry import RigidTransform, save_camera
from panokit.occupancy import GridSpec, OccupancyGrid, write_labels
from panokit.synthetic import (
    board_views,
    default_ocam_camera,
    default_pinhole_camera,
    example_extrinsics,
    make_annotation_dataset,
    make_extrinsic_target,
)
from panokit.tensorio import save_bundle, save_cloud_ascii, save_raster, save_tensor


def write_calibration_inputs(root: Path, rng: np.random.Generator) -> None:
    cam = default_pinhole_camera()
    save_camera(root / "camera.json", cam)
    views, _ = board_views(cam, 10, rng, noise_px=0.5)
    save_board_file(root / "views.json", views)

    ocam = default_ocam_camera()
    save_camera(root / "ocam.json", ocam)
    oviews, _ = board_views(ocam, 6, rng, depth_range=(0.5, 0.7),
                            noise_px=0.5)
    save_board_file(root / "ocam_views.json", oviews)

    obs = make_extrinsic_target(cam, example_extrinsics(), 5, rng,
                                noise_px=0.5)
    save_corner_file(root / "corners.json", obs)
    with open(root / "identity.json", "w") as f:
        json.dump(RigidTransform.identity().to_json_dict(), f, indent=2)


def write_sensor_inputs(root: Path, rng: np.random.Generator) -> None:
    cloud = rng.normal(scale=2.0, size=(500, 3)) + [0.0, 0.0, 4.0]
    save_cloud_ascii(root / "cloud.xyz", cloud)

    # 45-degree linearly polarized scene with a faint unpolarized floor
    base = rng.uniform(0.1, 0.4, size=(120, 160))
    save_raster(root / "i0.f32", base + 0.5)
    save_raster(root / "i45.f32", base + 1.0)
    save_raster(root / "i90.f32", base + 0.5)
    save_raster(root / "i135.f32", base + 0.0)

    spec = GridSpec(x_range=(0.0, 12.8), y_range=(0.0, 12.8),
                    z_range=(0.0, 3.2), voxel_size=0.4)
    gt = rng.integers(0, 6, size=spec.dims).astype(np.uint8)
    pred = gt.copy()
    flip = rng.random(size=gt.shape) < 0.15
    pred[flip] = rng.integers(0, 6, size=int(flip.sum())).astype(np.uint8)
    write_labels(root / "gt.occ", OccupancyGrid(spec=spec, labels=gt,
                                                num_classes=12))
    write_labels(root / "pred.occ", OccupancyGrid(spec=spec, labels=pred,
                                                  num_classes=12))

    rate, n = 100.0, 2048
    t = np.arange(n) / rate
    az = (9.81 + 0.25 * np.sin(2 * np.pi * 13.0 * t)
          + 0.02 * t + rng.normal(0.0, 0.03, size=n))
    with open(root / "imu.csv", "w") as f:
        f.write("timestamp,ax,ay,az\n")
        for ti, a in zip(t, az):
            f.write(f"{ti:.6f},0.0,0.0,{a:.9f}\n")


def write_fusion_inputs(root: Path, rng: np.random.Generator) -> None:
    C, H, W = 8, 32, 64
    save_tensor(root / "feat.f32", rng.normal(size=(C, H, W)).astype(np.float32))
    hidden = 4
    vjc = VjcWeights(conv1_w=rng.normal(size=(hidden, C, 3)) * 0.1,
                     conv1_b=rng.normal(size=hidden) * 0.1,
                     conv2_w=rng.normal(size=(hidden, hidden, 3)) * 0.1,
                     conv2_b=rng.normal(size=hidden) * 0.1,
                     linear_w=rng.normal(size=hidden) * 0.1,
                     linear_b=0.0)
    save_bundle(root / "vjc.pkwb",
                {k: np.asarray(v, dtype=np.float32)
                 for k, v in vjc.to_bundle().items()})

    D, mlp_hidden = 16, 8
    channels = {"lidar": 8, "pal": 3, "thermal": 1, "polar": 2}
    proj = {m: (rng.normal(size=(D, c)) * 0.3, rng.normal(size=D) * 0.1)
            for m, c in channels.items()}
    mlp = {m: (rng.normal(size=(mlp_hidden, D)) * 0.3,
               rng.normal(size=mlp_hidden) * 0.1,
               rng.normal(size=(D, mlp_hidden)) * 0.3,
               rng.normal(size=D) * 0.1)
           for m in MODALITY_ORDER}
    mipf = MipfWeights(proj=proj, prompt_mlp=mlp,
                       key_w=rng.normal(size=(D, D)) * 0.3,
                       value_w=rng.normal(size=(D, D)) * 0.3,
                       gate_w=rng.normal(size=(D, D)) * 0.3,
                       gate_b=rng.normal(size=D) * 0.1, heads=4)
    save_bundle(root / "mipf.pkwb",
                {k: np.asarray(v, dtype=np.float32)
                 for k, v in mipf.to_bundle().items()})
    for name, c in channels.items():
        save_tensor(root / f"{name}.f32",
                    rng.normal(size=(c, 24, 24)).astype(np.float32))


def write_manifest(root: Path) -> None:
    streams = {
        "lidar": [{"t": f"{1000.0 + 0.1 * i:.9f}",
                   "path": f"clouds/{i:06d}.bin"} for i in range(50)],
        "pal": [{"t": f"{1000.012 + 0.1 * i:.9f}",
                 "path": f"images/pal/{i:06d}.png"} for i in range(50)],
        "thermal": [{"t": f"{1000.03 + 0.2 * i:.9f}",
                     "path": f"images/thermal/{i:06d}.png"}
                    for i in range(25)],
    }
    doc = {"sequence_id": "seq000", "scene": "urban", "lighting": "day",
           "split": "train", "streams": streams}
    with open(root / "manifest.json", "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("fixtures"),
                    help="output directory (default: ./fixtures)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write_calibration_inputs(args.out, rng)
    write_sensor_inputs(args.out, rng)
    write_fusion_inputs(args.out, rng)
    write_manifest(args.out)
    make_annotation_dataset(args.out / "annotation_data", seed=args.seed)
    print(f"fixtures written to {args.out}")
    print(f"try: panokit --output /tmp/run calibrate-extrinsics "
          f"--corners {args.out / 'corners.json'} "
          f"--camera {args.out / 'camera.json'}")
    print(f"or:  panokit serve --data {args.out / 'annotation_data'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
