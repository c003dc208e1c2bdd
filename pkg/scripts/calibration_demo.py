#!/usr/bin/env python3
"""Calibration accuracy sweep on synthetic data.

Runs pinhole intrinsic calibration from checkerboard views and rig
extrinsic calibration from whiteboard corners at a range of pixel noise
levels, printing recovered-vs-true errors per level.
"""

import argparse

import numpy as np

from panokit.calib import (
    calibrate_extrinsics,
    calibrate_intrinsics_pinhole,
    rotation_angle_deg,
)
from panokit.synthetic import (
    board_views,
    default_pinhole_camera,
    example_extrinsics,
    make_extrinsic_target,
)


def intrinsic_row(noise: float, n_views: int, seeds: range) -> str:
    cam = default_pinhole_camera()
    truth = cam.intrinsics
    fx, cx, k1, rms = [], [], [], []
    for seed in seeds:
        views, _ = board_views(cam, n_views, np.random.default_rng(seed),
                               noise_px=noise)
        result = calibrate_intrinsics_pinhole(views, (cam.width, cam.height))
        est = result.camera.intrinsics
        fx.append(100.0 * abs(est.fx - truth.fx) / truth.fx)
        cx.append(abs(est.cx - truth.cx))
        k1.append(100.0 * abs(est.distortion[0] - truth.distortion[0])
                  / abs(truth.distortion[0]))
        rms.append(result.rms)
    return (f"{noise:7.2f} {np.median(fx):9.3f} {np.median(cx):9.3f} "
            f"{np.median(k1):9.1f} {np.median(rms):10.4f}")


def extrinsic_row(noise: float, n_frames: int, seeds: range) -> str:
    cam = default_pinhole_camera()
    T_true = example_extrinsics()
    rot, trans, rms = [], [], []
    for seed in seeds:
        obs = make_extrinsic_target(cam, T_true, n_frames,
                                    np.random.default_rng(seed),
                                    noise_px=noise)
        result = calibrate_extrinsics(obs, cam)
        rot.append(rotation_angle_deg(result.transform.rotation,
                                      T_true.rotation))
        trans.append(1000.0 * np.linalg.norm(result.transform.translation
                                             - T_true.translation))
        rms.append(result.rms)
    return (f"{noise:7.2f} {np.median(rot):9.4f} {np.median(trans):9.2f} "
            f"{np.median(rms):10.4f}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--views", type=int, default=10,
                    help="checkerboard views per intrinsic run")
    ap.add_argument("--frames", type=int, default=3,
                    help="whiteboard frames per extrinsic run")
    ap.add_argument("--seeds", type=int, default=10,
                    help="seeds per noise level (medians reported)")
    args = ap.parse_args()

    seeds = range(args.seeds)
    noise_levels = [0.0, 0.25, 0.5, 1.0, 2.0]

    print(f"pinhole intrinsics, {args.views} views, "
          f"median over {args.seeds} seeds")
    print("  noise    fx err%    cx err    k1 err%    rms px")
    for noise in noise_levels:
        print(intrinsic_row(noise, args.views, seeds))

    print(f"\nrig extrinsics, {args.frames} frames, "
          f"median over {args.seeds} seeds")
    print("  noise   rot deg   trans mm    rms px")
    for noise in noise_levels:
        print(extrinsic_row(noise, args.frames, seeds))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
