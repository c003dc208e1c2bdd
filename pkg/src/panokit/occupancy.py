"""Semantic occupancy grids: voxelization, confusion/mIoU metrics, label I/O.

Default grid: 64 x 64 x 16 voxels of 0.4 m covering x, y in [-12.8, 12.8]
and z in [-2.4, 4.0] meters. Labels are 0 (free), 1..12 (semantic), 255
(ignore).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFile,
    EmptyClassSet,
    FeatureWidthMismatch,
    InvariantViolation,
    SpecMismatch,
)

IGNORE_ID = 255
LABEL_MAGIC = b"PANOKOCC"
LABEL_VERSION = 1

# Voxel-unit slack when flooring continuous coordinates: (p - min)/voxel can
# land a hair under an integer for values that are exact in meters (2.4/0.4
# is 5.999999999999999 in binary floating point). 1e-9 voxels is ~0.4 nm.
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple[float, float] = (-12.8, 12.8)
    y_range: tuple[float, float] = (-12.8, 12.8)
    z_range: tuple[float, float] = (-2.4, 4.0)
    voxel_size: float = 0.4

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise InvariantViolation("voxel_size must be positive")
        dims = []
        for name, (lo, hi) in (("x", self.x_range), ("y", self.y_range),
                               ("z", self.z_range)):
            if not hi > lo:
                raise InvariantViolation(f"{name}_range must be increasing")
            n = (hi - lo) / self.voxel_size
            if abs(n - round(n)) > _FLOOR_EPS:
                raise InvariantViolation(
                    f"{name} extent {hi - lo} is not an integer number of "
                    f"{self.voxel_size} m voxels")
            dims.append(int(round(n)))
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "y_range", (float(self.y_range[0]), float(self.y_range[1])))
        object.__setattr__(self, "z_range", (float(self.z_range[0]), float(self.z_range[1])))
        object.__setattr__(self, "_dims", tuple(dims))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self._dims

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    def to_json_dict(self) -> dict:
        return {"x_range": list(self.x_range), "y_range": list(self.y_range),
                "z_range": list(self.z_range), "voxel_size": self.voxel_size}

    @staticmethod
    def from_json_dict(d: dict) -> "GridSpec":
        return GridSpec(x_range=tuple(d["x_range"]), y_range=tuple(d["y_range"]),
                        z_range=tuple(d["z_range"]),
                        voxel_size=float(d["voxel_size"]))


DEFAULT_SPEC = GridSpec()
DEFAULT_NUM_CLASSES = 12


@dataclass(frozen=True)
class OccupancyGrid:
    spec: GridSpec
    labels: np.ndarray
    num_classes: int = DEFAULT_NUM_CLASSES

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.spec.dims:
            raise InvariantViolation(
                f"labels shape {labels.shape} does not match grid dims "
                f"{self.spec.dims}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise InvariantViolation("labels must be integers")
        bad = (labels > self.num_classes) & (labels != IGNORE_ID)
        if np.any(bad):
            raise InvariantViolation(
                f"labels contain ids outside 0..{self.num_classes} and "
                f"{IGNORE_ID}")
        object.__setattr__(self, "labels", labels.astype(np.uint8))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvariantViolation("non-finite point coordinates")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=float).reshape(-1)
            if len(inten) != len(pts):
                raise InvariantViolation("intensity length mismatch")
            object.__setattr__(self, "intensity", inten)
        if self.features is not None:
            try:
                feats = np.asarray(self.features, dtype=float)
            except ValueError as e:
                raise FeatureWidthMismatch(str(e)) from e
            if feats.ndim != 2 or len(feats) != len(pts):
                raise FeatureWidthMismatch(
                    f"features must be (N, F) with N={len(pts)}, got shape "
                    f"{feats.shape}")
            object.__setattr__(self, "features", feats)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class VoxelFeatureSet:
    """Sparse voxel index -> (mean feature over retained points, count)."""

    entries: dict
    cap: int | None
    feature_width: int


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[gt, pred] over classes 0..num_classes."""

    counts: np.ndarray
    num_classes: int
    total: int


@dataclass(frozen=True)
class MiouResult:
    miou: float
    per_class: dict
    absent: tuple[int, ...]


def world_to_voxel(p, spec: GridSpec = DEFAULT_SPEC):
    """Voxel index of a point, or None when outside the grid. Lower bounds
    inclusive, upper bounds exclusive."""
    idx, ok = world_to_voxel_batch(np.asarray(p, dtype=float)[None, :], spec)
    return tuple(int(v) for v in idx[0]) if ok[0] else None


def world_to_voxel_batch(points: np.ndarray, spec: GridSpec = DEFAULT_SPEC):
    """(N, 3) points -> ((N, 3) indices, (N,) validity mask)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    q = (pts - spec.mins) / spec.voxel_size
    idx = np.floor(q + _FLOOR_EPS).astype(np.int64)
    dims = np.array(spec.dims)
    ok = np.all((idx >= 0) & (idx < dims), axis=1)
    return idx, ok


def voxel_center(index, spec: GridSpec = DEFAULT_SPEC) -> np.ndarray:
    return spec.mins + (np.asarray(index, dtype=float) + 0.5) * spec.voxel_size


def voxelize(cloud: PointCloud, spec: GridSpec = DEFAULT_SPEC,
             cap: int | None = 10) -> VoxelFeatureSet:
    """Bucket points into voxels keeping the first `cap` per voxel in input
    order; each voxel's feature is the mean over its retained points. Point
    coordinates serve as the feature when the cloud carries none."""
    if cap is not None and cap < 1:
        raise InvariantViolation("cap must be >= 1")
    feats = cloud.features if cloud.features is not None else cloud.points
    width = feats.shape[1]
    idx, ok = world_to_voxel_batch(cloud.points, spec)

    buckets: dict[tuple, list] = {}
    for i in np.flatnonzero(ok):
        key = (int(idx[i, 0]), int(idx[i, 1]), int(idx[i, 2]))
        kept = buckets.setdefault(key, [])
        if cap is None or len(kept) < cap:
            kept.append(i)
    entries = {
        key: (feats[kept].mean(axis=0), len(kept))
        for key, kept in buckets.items()
    }
    return VoxelFeatureSet(entries=entries, cap=cap, feature_width=width)


def confusion(pred: OccupancyGrid, gt: OccupancyGrid,
              ignore_id: int = IGNORE_ID) -> ConfusionMatrix:
    """Tally counts[gt, pred] over voxels whose ground truth is not ignored."""
    if pred.spec != gt.spec:
        raise SpecMismatch("prediction and ground truth use different grids")
    if pred.num_classes != gt.num_classes:
        raise SpecMismatch("prediction and ground truth class counts differ")
    c = gt.num_classes + 1
    counted = gt.labels != ignore_id
    g = gt.labels[counted].astype(np.int64)
    p = pred.labels[counted].astype(np.int64)
    if np.any(p == ignore_id):
        raise InvariantViolation(
            "prediction contains ignore labels at counted voxels")
    counts = np.bincount(g * c + p, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(counts=counts, num_classes=gt.num_classes,
                           total=int(counted.sum()))


def miou(cm: ConfusionMatrix, class_set=None) -> MiouResult:
    """Unweighted mean of per-class TP/(TP+FP+FN).

    Defaults to the semantic classes 1..num_classes (free space excluded).
    Classes absent from both prediction and ground truth score 0 and are
    flagged so callers can drop them from the mean if they prefer.
    """
    if class_set is None:
        class_set = range(1, cm.num_classes + 1)
    classes = sorted(set(int(c) for c in class_set))
    if not classes:
        raise EmptyClassSet("mIoU needs at least one class")
    if classes[0] < 0 or classes[-1] > cm.num_classes:
        raise InvariantViolation(
            f"class set must lie within 0..{cm.num_classes}")
    per_class = {}
    absent = []
    for c in classes:
        tp = float(cm.counts[c, c])
        fp = float(cm.counts[:, c].sum()) - tp
        fn = float(cm.counts[c, :].sum()) - tp
        denom = tp + fp + fn
        if denom == 0:
            per_class[c] = 0.0
            absent.append(c)
        else:
            per_class[c] = tp / denom
    value = float(np.mean([per_class[c] for c in classes]))
    return MiouResult(miou=value, per_class=per_class, absent=tuple(absent))


# ------------------------------------------------------------------ file I/O

def write_labels(path, grid: OccupancyGrid) -> None:
    """Header (8-byte magic, u32 version, u32 JSON length), JSON spec block,
    then one unsigned byte per voxel in x-major, y, z order."""
    header = json.dumps({
        "spec": grid.spec.to_json_dict(),
        "num_classes": grid.num_classes,
        "dims": list(grid.spec.dims),
    }).encode()
    with open(path, "wb") as f:
        f.write(LABEL_MAGIC)
        f.write(np.uint32(LABEL_VERSION).astype("<u4").tobytes())
        f.write(np.uint32(len(header)).astype("<u4").tobytes())
        f.write(header)
        f.write(np.ascontiguousarray(grid.labels, dtype=np.uint8).tobytes())


def read_labels(path) -> OccupancyGrid:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise CorruptFile(f"{path}: truncated header")
    if raw[:8] != LABEL_MAGIC:
        raise CorruptFile(f"{path}: not an occupancy label file")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != LABEL_VERSION:
        raise SpecMismatch(f"{path}: unsupported label file version {version}")
    head_len = int(np.frombuffer(raw[12:16], dtype="<u4")[0])
    if len(raw) < 16 + head_len:
        raise CorruptFile(f"{path}: truncated spec block")
    try:
        header = json.loads(raw[16:16 + head_len].decode())
        spec = GridSpec.from_json_dict(header["spec"])
        num_classes = int(header["num_classes"])
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: bad spec block: {e}") from e
    nvox = int(np.prod(spec.dims))
    payload = raw[16 + head_len:]
    if len(payload) != nvox:
        raise CorruptFile(
            f"{path}: expected {nvox} label bytes, got {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(spec.dims)
    return OccupancyGrid(spec=spec, labels=labels.copy(),
                         num_classes=num_classes)
