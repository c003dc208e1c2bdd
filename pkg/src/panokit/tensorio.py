"""Wire formats for arrays: raw float32 blobs with JSON sidecars, 16-bit
PGM images, point-cloud files, and single-file weight bundles.

All raw blobs are little-endian IEEE-754 float32. PGM is big-endian per
the format definition. Sidecars live next to the blob as <path>.json.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import CorruptFile, ParseError


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _read_sidecar(path) -> dict:
    sc = _sidecar(path)
    if not sc.exists():
        raise CorruptFile(f"missing sidecar {sc}")
    try:
        return json.loads(sc.read_text())
    except json.JSONDecodeError as e:
        raise CorruptFile(f"{sc}: {e}") from e


# ------------------------------------------------------------- raw tensors

def save_tensor(path, arr) -> None:
    """N-d float array as raw f32 plus a {"dims": [...]} sidecar."""
    a = np.ascontiguousarray(arr, dtype="<f4")
    Path(path).write_bytes(a.tobytes())
    _sidecar(path).write_text(json.dumps({"dims": list(a.shape)}) + "\n")


def load_tensor(path) -> np.ndarray:
    meta = _read_sidecar(path)
    try:
        dims = [int(d) for d in meta["dims"]]
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"bad tensor sidecar for {path}: {e}") from e
    raw = Path(path).read_bytes()
    expect = int(np.prod(dims)) * 4
    if len(raw) != expect:
        raise CorruptFile(
            f"{path}: expected {expect} bytes for dims {dims}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)


# -------------------------------------------------------------- 2-D rasters

def save_raster(path, arr) -> None:
    """H x W float image as raw f32 plus a {"width","height"} sidecar."""
    a = np.ascontiguousarray(arr, dtype="<f4")
    if a.ndim != 2:
        raise ParseError(f"raster must be 2-D, got shape {a.shape}")
    Path(path).write_bytes(a.tobytes())
    _sidecar(path).write_text(
        json.dumps({"width": a.shape[1], "height": a.shape[0]}) + "\n")


def load_raster(path) -> np.ndarray:
    meta = _read_sidecar(path)
    try:
        w, h = int(meta["width"]), int(meta["height"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"bad raster sidecar for {path}: {e}") from e
    raw = Path(path).read_bytes()
    if len(raw) != w * h * 4:
        raise CorruptFile(f"{path}: expected {w * h * 4} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)


# ---------------------------------------------------------------------- PGM

def load_pgm(path) -> np.ndarray:
    """Binary PGM (P5). 16-bit samples are big-endian; returns float64 counts."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos] in b" \t\r\n":
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and raw[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise CorruptFile(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise CorruptFile(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as e:
        raise CorruptFile(f"{path}: bad PGM header") from e
    pos += 1  # single whitespace byte after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    data = raw[pos:]
    need = count * np.dtype(dtype).itemsize
    if len(data) < need:
        raise CorruptFile(f"{path}: expected {need} pixel bytes, got {len(data)}")
    img = np.frombuffer(data[:need], dtype=dtype).reshape(height, width)
    return img.astype(np.float64)


def save_pgm(path, arr, maxval: int = 65535) -> None:
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ParseError(f"PGM image must be 2-D, got shape {a.shape}")
    if np.any(a < 0) or np.any(a > maxval):
        raise ParseError("PGM samples must lie in [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype=dtype).tobytes())


# ------------------------------------------------------------- point clouds

def load_cloud_ascii(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Lines of "x y z [intensity]"; returns (points (N,3), intensity or None)."""
    rows = []
    widths = set()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ParseError(f"{path}:{lineno}: expected 3 or 4 columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            widths.add(len(parts))
    if len(widths) > 1:
        raise ParseError(f"{path}: mixed 3- and 4-column rows")
    if not rows:
        return np.zeros((0, 3)), None
    data = np.array(rows, dtype=float)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite coordinate")
    if data.shape[1] == 4:
        return data[:, :3], data[:, 3]
    return data, None


def save_cloud_ascii(path, points, intensity=None) -> None:
    pts = np.asarray(points, dtype=float)
    with open(path, "w") as f:
        for i, p in enumerate(pts):
            if intensity is not None:
                f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {intensity[i]:.9g}\n")
            else:
                f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")


def load_cloud_binary(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Raw little-endian f32 rows with sidecar {"count", "fields"}."""
    meta = _read_sidecar(path)
    try:
        count = int(meta["count"])
        fields = list(meta["fields"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"bad cloud sidecar for {path}: {e}") from e
    if fields[:3] != ["x", "y", "z"]:
        raise CorruptFile(f"{path}: cloud fields must start with x, y, z")
    width = len(fields)
    raw = Path(path).read_bytes()
    if len(raw) != count * width * 4:
        raise CorruptFile(
            f"{path}: expected {count * width * 4} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(count, width).astype(np.float64)
    if "intensity" in fields:
        return data[:, :3], data[:, fields.index("intensity")]
    return data[:, :3], None


def save_cloud_binary(path, points, intensity=None) -> None:
    pts = np.asarray(points, dtype=float)
    if intensity is not None:
        data = np.column_stack([pts, np.asarray(intensity, dtype=float)])
        fields = ["x", "y", "z", "intensity"]
    else:
        data = pts
        fields = ["x", "y", "z"]
    Path(path).write_bytes(np.ascontiguousarray(data, dtype="<f4").tobytes())
    _sidecar(path).write_text(
        json.dumps({"count": len(pts), "fields": fields}) + "\n")


def load_cloud(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Dispatch on sidecar presence: binary when <path>.json exists, else ASCII."""
    if _sidecar(path).exists():
        return load_cloud_binary(path)
    return load_cloud_ascii(path)


# ------------------------------------------------------------ weight bundles

_BUNDLE_MAGIC = b"PKWB"


def save_bundle(path, tensors: dict) -> None:
    """Named float arrays in one file: magic, u32 header length, JSON header
    mapping name -> {"dims", "offset"}, then concatenated raw f32 payloads."""
    header = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        a = np.ascontiguousarray(tensors[name], dtype="<f4")
        header[name] = {"dims": list(a.shape), "offset": offset}
        blob = a.tobytes()
        blobs.append(blob)
        offset += len(blob)
    head = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(_BUNDLE_MAGIC)
        f.write(np.uint32(len(head)).astype("<u4").tobytes())
        f.write(head)
        for blob in blobs:
            f.write(blob)


def load_bundle(path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:4] != _BUNDLE_MAGIC:
        raise CorruptFile(f"{path}: not a weight bundle")
    if len(raw) < 8:
        raise CorruptFile(f"{path}: truncated bundle header")
    head_len = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    try:
        header = json.loads(raw[8:8 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptFile(f"{path}: bad bundle header: {e}") from e
    base = 8 + head_len
    out = {}
    for name, entry in header.items():
        dims = [int(d) for d in entry["dims"]]
        nbytes = int(np.prod(dims)) * 4
        start = base + int(entry["offset"])
        if start + nbytes > len(raw):
            raise CorruptFile(f"{path}: bundle entry {name!r} runs past EOF")
        out[name] = np.frombuffer(raw[start:start + nbytes],
                                  dtype="<f4").reshape(dims).astype(np.float64)
    return out


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a same-directory temp file and rename, so readers never see
    a half-written file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())
