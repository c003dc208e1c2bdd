"""Checkerboard intrinsic calibration and corner-target LiDAR-camera
extrinsic calibration.

Intrinsics follow the planar-target recipe: per-view DLT homographies,
closed-form zero-skew K from the absolute-conic constraints, pose
decomposition, then a joint LM refinement of intrinsics plus per-view
poses. Extrinsics minimize corner reprojection error over a 6-DoF
axis-angle parameterization.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptFile,
    DegenerateConfiguration,
    DepthNonPositive,
    InsufficientCorrespondences,
    InvariantViolation,
    ParseError,
)
from .geometry import (
    CameraModel,
    OcamIntrinsics,
    PinholeIntrinsics,
    RigidTransform,
    axis_angle_from_rotation,
    ocam_unproject,
    project,
    rotation_batch_from_axis_angle,
    rotation_from_axis_angle,
)
from .optim import LeastSquaresProblem, LmConfig, LmReport, levenberg_marquardt

log = logging.getLogger(__name__)

CORNER_ORDER = ("top-left", "top-right", "bottom-right", "bottom-left")
_PLANE_RMS_WARN = 0.05


@dataclass(frozen=True)
class BoardObservation:
    """One view of a planar target: board-plane points (meters) with their
    observed image pixels."""

    frame_id: str
    board_points: np.ndarray
    image_points: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.board_points, dtype=float)
        ip = np.asarray(self.image_points, dtype=float)
        if bp.ndim != 2 or bp.shape[1] != 2:
            raise InvariantViolation("board_points must have shape (N, 2)")
        if ip.shape != bp.shape:
            raise InvariantViolation("image_points must match board_points shape")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(ip))):
            raise InvariantViolation("non-finite correspondence")
        object.__setattr__(self, "board_points", bp)
        object.__setattr__(self, "image_points", ip)

    def __len__(self):
        return len(self.board_points)


@dataclass(frozen=True)
class CornerFrame:
    """Four annotated whiteboard corners of one frame in the fixed order
    top-left, top-right, bottom-right, bottom-left, with the matching LiDAR
    3-D corners."""

    frame_id: str
    image_corners: np.ndarray
    lidar_corners: np.ndarray

    def __post_init__(self):
        ic = np.asarray(self.image_corners, dtype=float)
        lc = np.asarray(self.lidar_corners, dtype=float)
        if ic.ndim != 2 or ic.shape[1] != 2:
            raise InvariantViolation("image_corners must have shape (N, 2)")
        if lc.ndim != 2 or lc.shape[1] != 3 or lc.shape[0] != ic.shape[0]:
            raise InvariantViolation("lidar_corners must have shape (N, 3) "
                                     "matching image_corners")
        if not (np.all(np.isfinite(ic)) and np.all(np.isfinite(lc))):
            raise InvariantViolation("non-finite corner")
        if len(ic) != 4:
            log.warning("frame %s has %d corners, expected 4",
                        self.frame_id, len(ic))
        else:
            self._check_winding(ic)
            self._check_coplanar(lc)
        object.__setattr__(self, "image_corners", ic)
        object.__setattr__(self, "lidar_corners", lc)

    def _check_winding(self, ic):
        # TL,TR,BR,BL in image coordinates (y down) gives a positive shoelace sum
        x, y = ic[:, 0], ic[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area2 <= 0:
            log.warning("frame %s: image corners do not wind TL,TR,BR,BL",
                        self.frame_id)

    def _check_coplanar(self, lc):
        centered = lc - lc.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        rms = sv[-1] / np.sqrt(len(lc))
        if rms >= _PLANE_RMS_WARN:
            log.warning("frame %s: LiDAR corners off-plane by %.3f m RMS",
                        self.frame_id, rms)

    def __len__(self):
        return len(self.image_corners)


@dataclass(frozen=True)
class CornerObservationSet:
    frames: tuple[CornerFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def total_correspondences(self) -> int:
        return sum(len(f) for f in self.frames)


@dataclass(frozen=True)
class CalibrationResult:
    camera: CameraModel | None
    transform: RigidTransform | None
    rms: float
    per_frame: tuple[dict, ...]
    report: LmReport
    warnings: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        d = {
            "rms": float(self.rms),
            "frames": [
                {"id": f["id"],
                 "rms": float(f["rms"]),
                 "residuals": np.asarray(f["residuals"]).tolist()}
                for f in self.per_frame
            ],
            "report": self.report.to_json_dict(),
            "warnings": list(self.warnings),
        }
        if self.camera is not None:
            d["camera"] = self.camera.to_json_dict()
        if self.transform is not None:
            d["extrinsics"] = self.transform.to_json_dict()
        return d


# ----------------------------------------------------------------- file I/O

def load_corner_file(path) -> CornerObservationSet:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CorruptFile(f"{path}: {e}") from e
    try:
        frames = [CornerFrame(frame_id=str(fr["id"]),
                              image_corners=np.array(fr["image_corners"], dtype=float),
                              lidar_corners=np.array(fr["lidar_corners"], dtype=float))
                  for fr in doc["frames"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad corner file: {e}") from e
    return CornerObservationSet(tuple(frames))


def save_corner_file(path, obs: CornerObservationSet) -> None:
    doc = {"frames": [{"id": f.frame_id,
                       "image_corners": f.image_corners.tolist(),
                       "lidar_corners": f.lidar_corners.tolist()}
                      for f in obs.frames]}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_board_file(path) -> list[BoardObservation]:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CorruptFile(f"{path}: {e}") from e
    try:
        return [BoardObservation(frame_id=str(fr["id"]),
                                 board_points=np.array(fr["board_points"], dtype=float),
                                 image_points=np.array(fr["image_points"], dtype=float))
                for fr in doc["frames"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad board file: {e}") from e


def save_board_file(path, views: list[BoardObservation]) -> None:
    doc = {"frames": [{"id": v.frame_id,
                       "board_points": v.board_points.tolist(),
                       "image_points": v.image_points.tolist()}
                      for v in views]}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


# --------------------------------------------------------------- homography

def _normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin and mean radius to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.mean(np.linalg.norm(pts - c, axis=1))
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]],
                     [0.0, s, -s * c[1]],
                     [0.0, 0.0, 1.0]])


def estimate_homography(view: BoardObservation) -> np.ndarray:
    """Normalized DLT board-plane -> image homography with unit Frobenius norm."""
    n = len(view)
    if n < 4:
        raise DegenerateConfiguration(
            f"homography needs at least 4 correspondences, got {n}")
    Tb = _normalization(view.board_points)
    Ti = _normalization(view.image_points)
    b = np.column_stack([view.board_points, np.ones(n)]) @ Tb.T
    i = np.column_stack([view.image_points, np.ones(n)]) @ Ti.T

    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = b
    A[0::2, 6:9] = -i[:, 0:1] * b
    A[1::2, 3:6] = b
    A[1::2, 6:9] = -i[:, 1:2] * b
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-10 * s[0]:
        raise DegenerateConfiguration("correspondences are rank-deficient "
                                      "(collinear or repeated points)")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Ti) @ Hn @ Tb
    H /= np.linalg.norm(H)
    # sign convention: positive entry of largest magnitude
    flat = H.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        H = -H
    return H


def _pose_from_homography(H: np.ndarray, K: np.ndarray) -> RigidTransform:
    """Decompose H = K [r1 r2 t] (up to scale) into a board pose with the
    board in front of the camera."""
    A = np.linalg.solve(K, H)
    lam = 2.0 / (np.linalg.norm(A[:, 0]) + np.linalg.norm(A[:, 1]))
    if lam * A[2, 2] < 0:
        lam = -lam
    r1 = lam * A[:, 0]
    r2 = lam * A[:, 1]
    r3 = np.cross(r1, r2)
    Q = np.column_stack([r1, r2, r3])
    U, _, Vt = np.linalg.svd(Q)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return RigidTransform(R, lam * A[:, 2])


# -------------------------------------------------- intrinsic initialization

def _zhang_intrinsics(Hs: list[np.ndarray]) -> np.ndarray:
    """Closed-form zero-skew K from >= 3 homographies."""

    def v(H, a, b):
        return np.array([
            H[0, a] * H[0, b],
            H[1, a] * H[1, b],
            H[2, a] * H[0, b] + H[0, a] * H[2, b],
            H[2, a] * H[1, b] + H[1, a] * H[2, b],
            H[2, a] * H[2, b],
        ])

    V = []
    for H in Hs:
        V.append(v(H, 0, 1))
        V.append(v(H, 0, 0) - v(H, 1, 1))
    V = np.array(V)
    _, s, vt = np.linalg.svd(V)
    if s[-2] < 1e-9 * s[0]:
        raise DegenerateConfiguration(
            "absolute-conic constraints are rank-deficient "
            "(views share an orientation, e.g. all fronto-parallel)")
    b = vt[-1]
    if b[0] < 0:
        b = -b
    B11, B22, B13, B23, B33 = b
    if B11 <= 0 or B22 <= 0:
        raise DegenerateConfiguration("conic estimate is not positive definite")
    u0 = -B13 / B11
    v0 = -B23 / B22
    lam = B33 - (B13 ** 2 / B11 + B23 ** 2 / B22)
    if lam <= 0:
        raise DegenerateConfiguration("conic estimate is not positive definite")
    fx = np.sqrt(lam / B11)
    fy = np.sqrt(lam / B22)
    return np.array([[fx, 0.0, u0], [0.0, fy, v0], [0.0, 0.0, 1.0]])


# -------------------------------------------------------- residual machinery

def _stack_views(views: list[BoardObservation]):
    """Concatenate correspondences; returns (board xyz, pixels, view index)."""
    pts, pix, idx = [], [], []
    for vi, view in enumerate(views):
        pts.append(np.column_stack([view.board_points,
                                    np.zeros(len(view))]))
        pix.append(view.image_points)
        idx.append(np.full(len(view), vi))
    return np.vstack(pts), np.vstack(pix), np.concatenate(idx)


def _pinhole_uv(P, fx, fy, cx, cy, dist):
    """Distorted pinhole projection on raw arrays; Z <= 0 maps to +inf so the
    solver treats such trial steps as rejected."""
    z = P[:, 2]
    bad = z <= 0
    zsafe = np.where(bad, 1.0, z)
    x = P[:, 0] / zsafe
    y = P[:, 1] / zsafe
    k1, k2, k3, p1, p2 = dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    uv = np.stack([fx * xd + cx, fy * yd + cy], axis=-1)
    uv[bad] = np.inf
    return uv


def _ocam_uv(P, poly, cx, cy, alpha):
    z = P[:, 2]
    bad = z <= 0
    zsafe = np.where(bad, 1.0, z)
    planar = np.hypot(P[:, 0], P[:, 1])
    rho = planar / zsafe
    r = np.polynomial.polynomial.polyval(rho, np.asarray(poly))
    on_axis = planar == 0.0
    psafe = np.where(on_axis, 1.0, planar)
    nu = np.where(on_axis, 0.0, P[:, 0] / psafe)
    eta = np.where(on_axis, 0.0, P[:, 1] / psafe)
    uv = np.stack([cx + r * (nu + alpha * eta), cy + r * eta], axis=-1)
    uv[bad] = np.inf
    return uv


def _transform_stacked(pose_params, pts, idx):
    R = rotation_batch_from_axis_angle(pose_params[:, :3])
    t = pose_params[:, 3:]
    return np.einsum("nij,nj->ni", R[idx], pts) + t[idx]


def _per_frame_table(views_or_frames, residuals, counts):
    table = []
    start = 0
    for thing, n in zip(views_or_frames, counts):
        r = residuals[start:start + n]
        start += n
        table.append({
            "id": thing.frame_id,
            "residuals": r,
            "rms": float(np.sqrt(np.mean(r ** 2))) if n else 0.0,
        })
    return tuple(table)


# ------------------------------------------------------------- calibrations

def calibrate_intrinsics_pinhole(views: list[BoardObservation],
                                 image_size: tuple[int, int],
                                 config: LmConfig = LmConfig()) -> CalibrationResult:
    """Full pinhole calibration: closed-form init, distortion from zero,
    joint refinement over intrinsics and all view poses."""
    if len(views) < 3:
        raise DegenerateConfiguration(
            f"pinhole calibration needs at least 3 views, got {len(views)}")
    Hs = [estimate_homography(v) for v in views]
    K0 = _zhang_intrinsics(Hs)
    poses = [_pose_from_homography(H, K0) for H in Hs]

    pts, pix, idx = _stack_views(views)
    nv = len(views)
    x0 = np.concatenate([
        [K0[0, 0], K0[1, 1], K0[0, 2], K0[1, 2]],
        np.zeros(5),
        np.concatenate([np.concatenate([axis_angle_from_rotation(p.rotation),
                                        p.translation]) for p in poses]),
    ])

    def residual(x):
        P = _transform_stacked(x[9:].reshape(nv, 6), pts, idx)
        uv = _pinhole_uv(P, x[0], x[1], x[2], x[3], x[4:9])
        return (uv - pix).ravel()

    problem = LeastSquaresProblem(residual, n_params=len(x0),
                                  n_residuals=2 * len(pts))
    report = levenberg_marquardt(problem, x0, config)
    x = report.x
    intr = PinholeIntrinsics(fx=float(x[0]), fy=float(x[1]),
                             cx=float(x[2]), cy=float(x[3]),
                             distortion=tuple(x[4:9]))
    cam = CameraModel(intr, width=int(image_size[0]), height=int(image_size[1]))
    final = residual(x).reshape(-1, 2)
    rms = float(np.sqrt(np.mean(final ** 2)))
    table = _per_frame_table(views, final, [len(v) for v in views])
    return CalibrationResult(camera=cam, transform=None, rms=rms,
                             per_frame=table, report=report)


def _ocam_unchecked(poly, cx, cy, alpha, rho_max) -> OcamIntrinsics:
    # bypass the monotonicity sweep: used only to hand back a refined model
    # that lost invertibility, which the caller is warned about
    intr = object.__new__(OcamIntrinsics)
    object.__setattr__(intr, "poly", tuple(float(a) for a in poly))
    object.__setattr__(intr, "cx", float(cx))
    object.__setattr__(intr, "cy", float(cy))
    object.__setattr__(intr, "alpha", float(alpha))
    object.__setattr__(intr, "rho_max", float(rho_max))
    return intr


def refine_intrinsics_ocam(views: list[BoardObservation],
                           initial: OcamIntrinsics,
                           image_size: tuple[int, int],
                           initial_poses: list[RigidTransform] | None = None,
                           config: LmConfig = LmConfig()) -> CalibrationResult:
    """Refine omnidirectional intrinsics plus per-view poses from an initial
    parameter guess.

    When poses are not supplied they are bootstrapped by unprojecting the
    observed pixels with the initial model and decomposing the board-to-
    normalized-plane homography.
    """
    if len(views) < 3:
        raise DegenerateConfiguration(
            f"refinement needs at least 3 views, got {len(views)}")
    if initial_poses is None:
        initial_poses = []
        for view in views:
            rays = ocam_unproject(view.image_points, initial)
            normalized = rays[:, :2] / rays[:, 2:3]
            plane_view = BoardObservation(view.frame_id, view.board_points,
                                          normalized)
            H = estimate_homography(plane_view)
            initial_poses.append(_pose_from_homography(H, np.eye(3)))
    elif len(initial_poses) != len(views):
        raise InvariantViolation("one initial pose per view required")

    pts, pix, idx = _stack_views(views)
    nv = len(views)
    npoly = len(initial.poly)
    x0 = np.concatenate([
        initial.poly,
        [initial.cx, initial.cy, initial.alpha],
        np.concatenate([np.concatenate([axis_angle_from_rotation(p.rotation),
                                        p.translation]) for p in initial_poses]),
    ])
    head = npoly + 3

    def residual(x):
        P = _transform_stacked(x[head:].reshape(nv, 6), pts, idx)
        uv = _ocam_uv(P, x[:npoly], x[npoly], x[npoly + 1], x[npoly + 2])
        return (uv - pix).ravel()

    problem = LeastSquaresProblem(residual, n_params=len(x0),
                                  n_residuals=2 * len(pts))
    report = levenberg_marquardt(problem, x0, config)
    x = report.x
    warnings = []
    try:
        intr = OcamIntrinsics(poly=tuple(x[:npoly]), cx=float(x[npoly]),
                              cy=float(x[npoly + 1]), alpha=float(x[npoly + 2]),
                              rho_max=initial.rho_max)
    except Exception:
        msg = "refined radius polynomial is no longer monotone on [0, rho_max]"
        log.warning(msg)
        warnings.append(msg)
        intr = _ocam_unchecked(x[:npoly], x[npoly], x[npoly + 1],
                               x[npoly + 2], initial.rho_max)
    cam = CameraModel(intr, width=int(image_size[0]), height=int(image_size[1]))
    final = residual(x).reshape(-1, 2)
    rms = float(np.sqrt(np.mean(final ** 2)))
    table = _per_frame_table(views, final, [len(v) for v in views])
    return CalibrationResult(camera=cam, transform=None, rms=rms,
                             per_frame=table, report=report,
                             warnings=tuple(warnings))


def calibrate_extrinsics(obs: CornerObservationSet, cam: CameraModel,
                         T0: RigidTransform | None = None,
                         config: LmConfig = LmConfig()) -> CalibrationResult:
    """6-DoF LiDAR-to-camera transform minimizing corner reprojection error.

    Corners that project behind the camera during a trial step contribute
    zero residual (masking) instead of failing the solve; a warning records
    that it happened.
    """
    total = obs.total_correspondences()
    if total < 8:
        raise InsufficientCorrespondences(
            f"extrinsic calibration needs at least 8 corner correspondences "
            f"(2 frames), got {total}")
    if T0 is None:
        T0 = RigidTransform.identity()

    P_L = np.vstack([f.lidar_corners for f in obs.frames])
    pix = np.vstack([f.image_corners for f in obs.frames])
    start = P_L @ T0.rotation.T + T0.translation
    if np.any(start[:, 2] <= 0):
        raise DepthNonPositive(
            "some corners are behind the camera under the initial transform")

    intr = cam.intrinsics
    pinhole = isinstance(intr, PinholeIntrinsics)
    masked = []

    def residual(x):
        R = rotation_from_axis_angle(x[:3])
        P = P_L @ R.T + x[3:]
        if pinhole:
            uv = _pinhole_uv(P, intr.fx, intr.fy, intr.cx, intr.cy,
                             intr.distortion)
        else:
            uv = _ocam_uv(P, intr.poly, intr.cx, intr.cy, intr.alpha)
        res = uv - pix
        behind = P[:, 2] <= 0
        if np.any(behind):
            if not masked:
                log.warning("masking %d corner(s) behind the camera during "
                            "optimization", int(np.sum(behind)))
            masked.append(int(np.sum(behind)))
            res[behind] = 0.0
        return res.ravel()

    x0 = np.concatenate([axis_angle_from_rotation(T0.rotation), T0.translation])
    problem = LeastSquaresProblem(residual, n_params=6, n_residuals=2 * len(P_L))
    report = levenberg_marquardt(problem, x0, config)
    x = report.x
    T = RigidTransform(rotation_from_axis_angle(x[:3]), x[3:])
    final = residual(x).reshape(-1, 2)
    rms = float(np.sqrt(np.mean(final ** 2)))
    table = _per_frame_table(obs.frames, final, [len(f) for f in obs.frames])
    warnings = []
    if masked:
        warnings.append("corner(s) projected behind the camera during "
                        "optimization and were masked")
    return CalibrationResult(camera=None, transform=T, rms=rms,
                             per_frame=table, report=report,
                             warnings=tuple(warnings))


def project_cloud(points, T: RigidTransform, cam: CameraModel):
    """Project a cloud into the image. Points behind the camera or outside
    [0, width) x [0, height) are dropped; returns (pixels, depths, kept
    indices into the input)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    P = pts @ T.rotation.T + T.translation
    front = P[:, 2] > 0
    idx = np.flatnonzero(front)
    uv = project(P[front], cam) if len(idx) else np.zeros((0, 2))
    inside = ((uv[:, 0] >= 0) & (uv[:, 0] < cam.width)
              & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height))
    idx = idx[inside]
    return uv[inside], P[idx, 2], idx


def rotation_angle_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    cos = (np.trace(Ra @ Rb.T) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
