"""Camera projection models and rigid-body transforms.

Conventions: right-handed camera frame with +z along the optical axis,
depths in meters, pixels (u, v) real-valued with u along image width.
Point arguments accept a single (3,) vector or a batch of shape (N, 3);
the returned pixel array matches ((2,) or (N, 2)). All types are
immutable value objects; every function is pure and re-entrant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    CorruptFile,
    DepthNonPositive,
    InvariantViolation,
    NotInvertible,
    OutOfRange,
    ParseError,
)

CAMERA_FORMAT_VERSION = 1

_ORTHO_TOL = 1e-9
_MONOTONE_SAMPLES = 1024


def _as_points(p) -> tuple[np.ndarray, bool]:
    """Coerce to an (N, 3) float array; second value tells if input was a single point."""
    a = np.asarray(p, dtype=float)
    if a.shape == (3,):
        return a[None, :], True
    if a.ndim != 2 or a.shape[1] != 3:
        raise InvariantViolation(f"expected shape (3,) or (N, 3), got {a.shape}")
    return a, False


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvariantViolation("non-finite rigid transform")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
            raise InvariantViolation("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise InvariantViolation("rotation matrix determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def to_json_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RigidTransform":
        try:
            return RigidTransform(np.array(d["rotation"], dtype=float),
                                  np.array(d["translation"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"bad rigid transform document: {e}") from e


def se3_transform(T: RigidTransform, p):
    """Apply p -> R p + t."""
    pts, single = _as_points(p)
    out = pts @ T.rotation.T + T.translation
    return out[0] if single else out


def se3_compose(A: RigidTransform, B: RigidTransform) -> RigidTransform:
    """Transform applying B first, then A."""
    return RigidTransform(A.rotation @ B.rotation,
                          A.rotation @ B.translation + A.translation)


def se3_inverse(T: RigidTransform) -> RigidTransform:
    Rt = T.rotation.T
    return RigidTransform(Rt, -Rt @ T.translation)


def rotation_from_axis_angle(w) -> np.ndarray:
    """Rodrigues' formula: 3-vector (axis * angle, radians) to rotation matrix."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        # second-order series keeps the map smooth through zero
        K = _skew(w)
        return np.eye(3) + K + 0.5 * (K @ K)
    k = w / theta
    K = _skew(k)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def axis_angle_from_rotation(R: np.ndarray) -> np.ndarray:
    """Inverse of Rodrigues' formula; returns axis * angle with angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-12:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if np.pi - theta < 1e-6:
        # near pi the off-diagonal difference vanishes; use the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # fix signs from the largest component
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis = axis * np.sign(A[i] + (np.arange(3) == i))
        n = np.linalg.norm(axis)
        if n == 0:
            return np.zeros(3)
        return axis / n * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v / (2.0 * np.sin(theta)) * theta


def rotation_batch_from_axis_angle(w: np.ndarray) -> np.ndarray:
    """Vectorized Rodrigues: (V, 3) axis-angle vectors to (V, 3, 3) rotations."""
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(w, axis=1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    k = w / safe[:, None]
    K = np.zeros((len(w), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
    K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
    KK = K @ K
    s = np.where(small, 0.0, np.sin(theta))[:, None, None]
    c = np.where(small, 0.0, 1.0 - np.cos(theta))[:, None, None]
    out = np.eye(3)[None] + s * K + c * KK
    if np.any(small):
        Ks = np.zeros_like(K)
        Ks[small, 0, 1], Ks[small, 0, 2] = -w[small, 2], w[small, 1]
        Ks[small, 1, 0], Ks[small, 1, 2] = w[small, 2], -w[small, 0]
        Ks[small, 2, 0], Ks[small, 2, 1] = -w[small, 1], w[small, 0]
        out[small] = np.eye(3)[None] + Ks[small] + 0.5 * (Ks[small] @ Ks[small])
    return out


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


@dataclass(frozen=True)
class PinholeIntrinsics:
    """Focal lengths/principal point in pixels plus radial-tangential distortion.

    Distortion order is (k1, k2, k3, p1, p2): three radial and two
    tangential coefficients applied on the normalized image plane.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    distortion: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantViolation("focal lengths must be positive")
        d = tuple(float(v) for v in self.distortion)
        if len(d) != 5 or not all(np.isfinite(d)):
            raise InvariantViolation("distortion must be 5 finite coefficients")
        object.__setattr__(self, "distortion", d)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class OcamIntrinsics:
    """Polynomial omnidirectional model: image radius r = sum_i poly[i] * rho^i.

    rho is the radial ratio sqrt(X^2 + Y^2) / Z of a camera-frame point,
    so the model requires Z > 0. `poly` is stored lowest degree first.
    `rho_max` bounds the working range; the polynomial must be strictly
    increasing on [0, rho_max], which is checked numerically on
    construction so the model stays invertible.
    """

    poly: tuple[float, ...]
    cx: float
    cy: float
    alpha: float = 0.0
    rho_max: float = 3.0

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.poly)
        if len(coeffs) < 2:
            raise InvariantViolation("polynomial needs at least 2 coefficients")
        if not all(np.isfinite(coeffs)):
            raise InvariantViolation("non-finite polynomial coefficient")
        if not self.rho_max > 0:
            raise InvariantViolation("rho_max must be positive")
        object.__setattr__(self, "poly", coeffs)
        rho = np.linspace(0.0, self.rho_max, _MONOTONE_SAMPLES)
        r = self.radius(rho)
        if np.any(np.diff(r) <= 0):
            raise NotInvertible(
                "radius polynomial is not strictly increasing on [0, rho_max]")

    def radius(self, rho):
        """Evaluate r = f(rho); accepts scalars or arrays."""
        return np.polynomial.polynomial.polyval(rho, np.asarray(self.poly))


@dataclass(frozen=True)
class CameraModel:
    """A pinhole or omnidirectional camera with its image size in pixels."""

    intrinsics: PinholeIntrinsics | OcamIntrinsics
    width: int
    height: int

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvariantViolation("image size must be positive")

    @property
    def kind(self) -> str:
        return "pinhole" if isinstance(self.intrinsics, PinholeIntrinsics) else "ocam"

    def to_json_dict(self) -> dict:
        d = {"version": CAMERA_FORMAT_VERSION, "model": self.kind,
             "width": self.width, "height": self.height}
        i = self.intrinsics
        if isinstance(i, PinholeIntrinsics):
            d.update(fx=i.fx, fy=i.fy, cx=i.cx, cy=i.cy,
                     distortion=list(i.distortion))
        else:
            d.update(poly=list(i.poly), cx=i.cx, cy=i.cy,
                     alpha=i.alpha, rho_max=i.rho_max)
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "CameraModel":
        try:
            if d.get("version", 1) != CAMERA_FORMAT_VERSION:
                raise ParseError(f"unsupported camera format version {d.get('version')}")
            model = d["model"]
            if model == "pinhole":
                intr = PinholeIntrinsics(
                    fx=float(d["fx"]), fy=float(d["fy"]),
                    cx=float(d["cx"]), cy=float(d["cy"]),
                    distortion=tuple(d.get("distortion", (0, 0, 0, 0, 0))))
            elif model == "ocam":
                intr = OcamIntrinsics(
                    poly=tuple(d["poly"]), cx=float(d["cx"]), cy=float(d["cy"]),
                    alpha=float(d.get("alpha", 0.0)),
                    rho_max=float(d.get("rho_max", 3.0)))
            else:
                raise ParseError(f"unknown camera model {model!r}")
            return CameraModel(intr, int(d["width"]), int(d["height"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"bad camera document: {e}") from e


def load_camera(path) -> CameraModel:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CorruptFile(f"{path}: {e}") from e
    return CameraModel.from_json_dict(doc)


def save_camera(path, cam: CameraModel) -> None:
    with open(path, "w") as f:
        json.dump(cam.to_json_dict(), f, indent=2)
        f.write("\n")


def pinhole_project(P, intr: PinholeIntrinsics):
    """Project camera-frame points through the distorted pinhole model.

    Raises DepthNonPositive if any point has Z <= 0.
    """
    pts, single = _as_points(P)
    if np.any(pts[:, 2] <= 0):
        raise DepthNonPositive("point behind the camera (Z <= 0)")
    x = pts[:, 0] / pts[:, 2]
    y = pts[:, 1] / pts[:, 2]
    k1, k2, k3, p1, p2 = intr.distortion
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    uv = np.stack([intr.fx * xd + intr.cx, intr.fy * yd + intr.cy], axis=-1)
    return uv[0] if single else uv


def ocam_project(P, intr: OcamIntrinsics):
    """Project camera-frame points through the polynomial omnidirectional model.

    Points on the optical axis map to the principal point (the radial
    direction is undefined there, so both direction components are zero).
    Raises DepthNonPositive if any point has Z <= 0.
    """
    pts, single = _as_points(P)
    if np.any(pts[:, 2] <= 0):
        raise DepthNonPositive("point behind the camera (Z <= 0)")
    planar = np.hypot(pts[:, 0], pts[:, 1])
    rho = planar / pts[:, 2]
    r = intr.radius(rho)
    on_axis = planar == 0.0
    safe = np.where(on_axis, 1.0, planar)
    nu = np.where(on_axis, 0.0, pts[:, 0] / safe)
    eta = np.where(on_axis, 0.0, pts[:, 1] / safe)
    u = intr.cx + r * (nu + intr.alpha * eta)
    v = intr.cy + r * eta
    uv = np.stack([u, v], axis=-1)
    return uv[0] if single else uv


def ocam_unproject(px, intr: OcamIntrinsics):
    """Invert the omnidirectional projection to a unit ray with positive z.

    Solves f(rho) = r by bracketed root finding on [0, rho_max] after
    undoing the affine pixel map. Raises OutOfRange when the pixel radius
    falls outside the polynomial's range on the working interval.
    """
    px = np.asarray(px, dtype=float)
    single = px.shape == (2,)
    pix = px[None, :] if single else px
    mu = pix[:, 0] - intr.cx
    mv = pix[:, 1] - intr.cy
    rnu = mu - intr.alpha * mv
    reta = mv
    r = np.hypot(rnu, reta)
    r_lo = intr.radius(0.0)
    r_hi = intr.radius(intr.rho_max)

    rays = np.empty((len(pix), 3))
    for i in range(len(pix)):
        if r[i] == 0.0 or (r[i] <= r_lo and r_lo <= 0.0):
            rays[i] = (0.0, 0.0, 1.0)
            continue
        if r[i] < r_lo - 1e-12 or r[i] > r_hi + 1e-12:
            raise OutOfRange(
                f"pixel radius {r[i]:.6g} outside invertible range "
                f"[{r_lo:.6g}, {r_hi:.6g}]")
        ri = min(max(r[i], r_lo), r_hi)
        rho = brentq(lambda q: intr.radius(q) - ri, 0.0, intr.rho_max,
                     xtol=1e-14, rtol=8.9e-16)
        nu = rnu[i] / r[i]
        eta = reta[i] / r[i]
        d = np.array([rho * nu, rho * eta, 1.0])
        rays[i] = d / np.linalg.norm(d)
    return rays[0] if single else rays


def project(P, cam: CameraModel):
    """Dispatch to the camera's model-specific projection."""
    if isinstance(cam.intrinsics, PinholeIntrinsics):
        return pinhole_project(P, cam.intrinsics)
    return ocam_project(P, cam.intrinsics)
