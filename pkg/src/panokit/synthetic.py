"""Synthetic rigs and fixture datasets.

Everything here is driven by a caller-supplied numpy Generator, so fixtures
are reproducible from a seed. Image noise is Gaussian in pixels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .calib import BoardObservation, CornerFrame, CornerObservationSet, save_corner_file
from .dataio import SequenceManifest, StreamEntry, StreamIndex, save_manifest
from .geometry import (
    CameraModel,
    OcamIntrinsics,
    PinholeIntrinsics,
    RigidTransform,
    project,
    rotation_from_axis_angle,
    save_camera,
    se3_inverse,
    se3_transform,
)


def default_pinhole_camera() -> CameraModel:
    intr = PinholeIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0,
                             distortion=(-0.1, 0.0, 0.0, 0.0, 0.0))
    return CameraModel(intr, width=640, height=480)


def default_ocam_camera() -> CameraModel:
    intr = OcamIntrinsics(poly=(0.0, 300.0, -20.0, 2.5), cx=700.0, cy=700.0,
                          alpha=0.01, rho_max=2.2)
    return CameraModel(intr, width=1400, height=1400)


def checkerboard_points(rows: int = 6, cols: int = 9,
                        square: float = 0.03) -> np.ndarray:
    """Inner-corner grid on the board plane, in meters, row-major."""
    ys, xs = np.mgrid[0:rows, 0:cols]
    return np.column_stack([xs.ravel() * square, ys.ravel() * square]).astype(float)


# centers of the view placement cycle, as fractions of the image half-extent;
# covering the periphery is what pins down distortion and the principal point
_VIEW_GRID = [(0.0, 0.0), (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0),
              (0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]


def _view_direction(cam: CameraModel, gx: float, gy: float,
                    frac_span: float) -> np.ndarray:
    """Unit-z direction whose projection lands at the requested fractional
    image position."""
    intr = cam.intrinsics
    if isinstance(intr, PinholeIntrinsics):
        u = intr.cx + gx * frac_span * (cam.width / 2.0)
        v = intr.cy + gy * frac_span * (cam.height / 2.0)
        return np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    # omnidirectional: walk out radially in rho instead of pixels
    rho = frac_span * 0.8 * intr.rho_max * np.hypot(gx, gy) / np.sqrt(2.0)
    if np.hypot(gx, gy) == 0:
        return np.array([0.0, 0.0, 1.0])
    ang = np.arctan2(gy, gx)
    return np.array([rho * np.cos(ang), rho * np.sin(ang), 1.0])


def _board_pose(i: int, cam: CameraModel, board_center: np.ndarray,
                rng: np.random.Generator, depth: float, frac_span: float,
                shrink: float) -> RigidTransform:
    # cycle tilt directions so the view set constrains all conic parameters
    signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    sx, sy = signs[i % 4]
    pitch = sx * np.radians(15.0 + 8.0 * rng.uniform())
    yaw = sy * np.radians(15.0 + 8.0 * rng.uniform())
    roll = np.radians(rng.uniform(-12.0, 12.0))
    R = (rotation_from_axis_angle([0.0, 0.0, roll])
         @ rotation_from_axis_angle([pitch, 0.0, 0.0])
         @ rotation_from_axis_angle([0.0, yaw, 0.0]))
    gx, gy = _VIEW_GRID[i % len(_VIEW_GRID)]
    jitter = rng.uniform(-0.05, 0.05, size=2)
    d = _view_direction(cam, gx * shrink + jitter[0], gy * shrink + jitter[1],
                        frac_span)
    target = d / d[2] * depth
    t = target - R @ np.append(board_center, 0.0)
    return RigidTransform(R, t)


def board_views(cam: CameraModel, n_views: int, rng: np.random.Generator,
                noise_px: float = 0.0, rows: int = 6, cols: int = 9,
                square: float = 0.05,
                depth_range: tuple[float, float] = (0.6, 1.0),
                frac_span: float = 0.62):
    """Synthetic checkerboard views cycling over the image so the set as a
    whole reaches the periphery; poses are guaranteed in front of the camera
    and fully inside the image. Returns (views, poses)."""
    board = checkerboard_points(rows, cols, square)
    center = board.mean(axis=0)
    views, poses = [], []
    for i in range(n_views):
        depth = float(np.interp(i, [0, max(n_views - 1, 1)], depth_range))
        placed = False
        for attempt in range(64):
            shrink = max(0.2, 1.0 - 0.12 * attempt)
            pose = _board_pose(i, cam, center, rng, depth, frac_span, shrink)
            pts3 = np.column_stack([board, np.zeros(len(board))])
            P = se3_transform(pose, pts3)
            if np.any(P[:, 2] <= 0.05):
                continue
            px = project(P, cam)
            if (np.all(px[:, 0] > 8) and np.all(px[:, 0] < cam.width - 8)
                    and np.all(px[:, 1] > 8) and np.all(px[:, 1] < cam.height - 8)):
                placed = True
                break
        if not placed:
            raise RuntimeError("could not place a board view inside the image")
        if noise_px > 0:
            px = px + rng.normal(0.0, noise_px, size=px.shape)
        views.append(BoardObservation(frame_id=f"view{i:03d}",
                                      board_points=board, image_points=px))
        poses.append(pose)
    return views, poses


def whiteboard_corners_camera(center_z: float, half_w: float = 0.6,
                              half_h: float = 0.45,
                              tilt: RigidTransform | None = None) -> np.ndarray:
    """TL, TR, BR, BL whiteboard corners in the camera frame (y down)."""
    corners = np.array([
        [-half_w, -half_h, 0.0],
        [half_w, -half_h, 0.0],
        [half_w, half_h, 0.0],
        [-half_w, half_h, 0.0],
    ])
    if tilt is not None:
        corners = se3_transform(tilt, corners)
    corners[:, 2] += center_z
    return corners


def make_extrinsic_target(cam: CameraModel, T_true: RigidTransform,
                          n_frames: int, rng: np.random.Generator,
                          noise_px: float = 0.0) -> CornerObservationSet:
    """Whiteboard corner observations: LiDAR-frame 3-D corners plus their
    image projections under T_true (optionally noisy)."""
    T_inv = se3_inverse(T_true)
    frames = []
    for i in range(n_frames):
        tilt = RigidTransform(
            rotation_from_axis_angle(rng.uniform(-0.25, 0.25, size=3)),
            np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3), 0.0]))
        corners_cam = whiteboard_corners_camera(center_z=3.0 + 0.6 * i, tilt=tilt)
        px = project(corners_cam, cam)
        if noise_px > 0:
            px = px + rng.normal(0.0, noise_px, size=px.shape)
        corners_lidar = se3_transform(T_inv, corners_cam)
        frames.append(CornerFrame(frame_id=f"{i:06d}", image_corners=px,
                                  lidar_corners=corners_lidar))
    return CornerObservationSet(tuple(frames))


def example_extrinsics() -> RigidTransform:
    """10 degrees of rotation and 0.2 m of translation, the kind of offset a
    co-mounted sensor pair actually has."""
    axis = np.array([0.3, 1.0, 0.2])
    axis = axis / np.linalg.norm(axis)
    return RigidTransform(rotation_from_axis_angle(axis * np.radians(10.0)),
                          np.array([0.12, -0.1, 0.1]))


def board_plane_cloud(corners_lidar: np.ndarray, rng: np.random.Generator,
                      n_board: int = 400, n_background: int = 300) -> np.ndarray:
    """Points sampled on the whiteboard quad plus loose background clutter,
    in the LiDAR frame."""
    tl, tr, br, bl = corners_lidar
    u = rng.uniform(0.02, 0.98, size=n_board)
    v = rng.uniform(0.02, 0.98, size=n_board)
    top = tl[None, :] * (1 - u[:, None]) + tr[None, :] * u[:, None]
    bottom = bl[None, :] * (1 - u[:, None]) + br[None, :] * u[:, None]
    board = top * (1 - v[:, None]) + bottom * v[:, None]
    center = corners_lidar.mean(axis=0)
    background = center + rng.uniform(-3.0, 3.0, size=(n_background, 3))
    return np.vstack([board, background])


def _render_frame_png(path, cam: CameraModel, corners_px: np.ndarray) -> None:
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (cam.width, cam.height))
    d = ImageDraw.Draw(img)
    for y in range(0, cam.height, 4):
        shade = 40 + int(60 * y / cam.height)
        d.rectangle([0, y, cam.width, y + 4], fill=(shade, shade, shade + 10))
    quad = [tuple(p) for p in corners_px]
    d.polygon(quad, fill=(225, 225, 220), outline=(30, 30, 30))
    for j, p in enumerate(quad):
        d.ellipse([p[0] - 3, p[1] - 3, p[0] + 3, p[1] + 3],
                  fill=(200, 60 + j * 40, 40))
    img.save(path)


def make_annotation_dataset(root, seed: int = 0, n_frames: int = 3) -> dict:
    """A small on-disk dataset for the annotation service: manifest, one PNG
    and one cloud per frame, offline LiDAR corner files, and the camera.
    Returns ground truth (extrinsics and exact image corners) for tests."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    cam = default_pinhole_camera()
    T_true = example_extrinsics()
    obs = make_extrinsic_target(cam, T_true, n_frames, rng)

    (root / "images" / "pal").mkdir(parents=True, exist_ok=True)
    (root / "clouds").mkdir(exist_ok=True)
    (root / "lidar_corners").mkdir(exist_ok=True)
    (root / "cameras").mkdir(exist_ok=True)
    (root / "annotations").mkdir(exist_ok=True)

    save_camera(root / "cameras" / "cam0.json", cam)
    pal_entries, lidar_entries = [], []
    truth_corners = {}
    for i, frame in enumerate(obs.frames):
        fid = frame.frame_id
        t = 1000.0 + 0.1 * i
        img_rel = f"images/pal/{fid}.png"
        cloud_rel = f"clouds/{fid}.xyz"
        _render_frame_png(root / img_rel, cam, frame.image_corners)
        cloud = board_plane_cloud(frame.lidar_corners, rng)
        with open(root / cloud_rel, "w") as f:
            for p in cloud:
                f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")
        with open(root / "lidar_corners" / f"{fid}.json", "w") as f:
            json.dump({"id": fid,
                       "lidar_corners": frame.lidar_corners.tolist()}, f,
                      indent=2)
        stamp = f"{t:.9f}"
        pal_entries.append(StreamEntry(timestamp=t, timestamp_str=stamp,
                                       path=img_rel))
        lidar_entries.append(StreamEntry(timestamp=t, timestamp_str=stamp,
                                         path=cloud_rel))
        truth_corners[fid] = frame.image_corners

    manifest = SequenceManifest(
        sequence_id="fixture000",
        scene="campus",
        lighting="day",
        split="test",
        streams={
            "pal": StreamIndex("pal", tuple(pal_entries)),
            "lidar": StreamIndex("lidar", tuple(lidar_entries)),
        })
    save_manifest(root / "manifest.json", manifest)
    with open(root / "extrinsics_true.json", "w") as f:
        json.dump(T_true.to_json_dict(), f, indent=2)
    save_corner_file(root / "corners_true.json", obs)
    return {"camera": cam, "extrinsics": T_true, "corners": truth_corners,
            "frames": [f.frame_id for f in obs.frames]}
