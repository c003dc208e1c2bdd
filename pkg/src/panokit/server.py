"""HTTP service behind the corner-annotation workflow.

Serves frames, images, and clouds from a dataset directory, stores corner
annotations as JSON files (the only mutable state), and runs extrinsic
solves as background jobs. All mutation goes through atomic file writes
serialized by a process-wide lock; reads never block on a running solve.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse

from .calib import (
    CornerFrame,
    CornerObservationSet,
    calibrate_extrinsics,
    project_cloud,
)
from .dataio import load_manifest
from .errors import NonConvergence, ToolkitError
from .geometry import RigidTransform, load_camera
from .tensorio import atomic_write_text, load_cloud

log = logging.getLogger("panokit.server")

API_PREFIX = "/api/v1"
DEFAULT_CLOUD_CAP = 5000


class _FrameStore:
    """K frames resolved from the manifest plus their on-disk side files."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.manifest = load_manifest(self.root / "manifest.json")
        images = {Path(e.path).stem: e
                  for e in self.manifest.streams["pal"].entries}
        clouds = {Path(e.path).stem: e
                  for e in self.manifest.streams["lidar"].entries}
        self.frames = {}
        for fid in sorted(images):
            self.frames[fid] = {
                "id": fid,
                "timestamp": images[fid].timestamp_str,
                "image": images[fid].path,
                "cloud": clouds[fid].path if fid in clouds else None,
            }
        self.cameras = {p.stem: p
                        for p in sorted((self.root / "cameras").glob("*.json"))}
        self._sizes = {}

    def require(self, fid: str) -> dict:
        if fid not in self.frames:
            raise HTTPException(404, detail=f"unknown frame {fid!r}")
        return self.frames[fid]

    def image_size(self, fid: str) -> tuple[int, int]:
        if fid not in self._sizes:
            from PIL import Image
            with Image.open(self.root / self.frames[fid]["image"]) as im:
                self._sizes[fid] = im.size
        return self._sizes[fid]

    def annotation_path(self, fid: str) -> Path:
        return self.root / "annotations" / f"{fid}.json"

    def read_annotation(self, fid: str) -> dict:
        path = self.annotation_path(fid)
        if not path.exists():
            return {"frame_id": fid, "corners": [], "revision": 0}
        return json.loads(path.read_text())

    def lidar_corners(self, fid: str) -> np.ndarray | None:
        path = self.root / "lidar_corners" / f"{fid}.json"
        if not path.exists():
            return None
        return np.asarray(json.loads(path.read_text())["lidar_corners"],
                          dtype=float)


def _error_kind(e: ToolkitError) -> str:
    return type(e).__name__


def create_app(data_dir, static_dir=None) -> FastAPI:
    store = _FrameStore(Path(data_dir))
    app = FastAPI(title="panokit annotation service")
    write_lock = threading.Lock()
    jobs: dict[str, dict] = {}
    job_seq = {"n": 0}

    def frame_summary(fid: str) -> dict:
        info = store.frames[fid]
        w, h = store.image_size(fid)
        return {
            "id": fid,
            "timestamp": info["timestamp"],
            "image": info["image"],
            "cloud": info["cloud"],
            "width": w,
            "height": h,
            "annotated": len(store.read_annotation(fid)["corners"]) == 4,
            "has_lidar_corners": store.lidar_corners(fid) is not None,
        }

    @app.get(f"{API_PREFIX}/frames")
    def get_frames():
        return {
            "sequence_id": store.manifest.sequence_id,
            "cameras": sorted(store.cameras),
            "frames": [frame_summary(fid) for fid in store.frames],
        }

    @app.get(f"{API_PREFIX}/image/{{fid}}/{{modality}}")
    def get_image(fid: str, modality: str):
        store.require(fid)
        if modality != "pal":
            raise HTTPException(404, detail=f"no {modality!r} image stream")
        path = store.root / store.frames[fid]["image"]
        if not path.exists():
            raise HTTPException(404, detail="image file missing on disk")
        return FileResponse(path, media_type="image/png")

    @app.get(f"{API_PREFIX}/cloud/{{fid}}")
    def get_cloud(fid: str, cap: int = Query(DEFAULT_CLOUD_CAP, ge=1),
                  stride: int = Query(1, ge=1)):
        info = store.require(fid)
        if info["cloud"] is None:
            raise HTTPException(404, detail=f"frame {fid!r} has no cloud")
        points, _ = load_cloud(store.root / info["cloud"])
        kept = points[::stride][:cap]
        return {
            "frame_id": fid,
            "total": int(len(points)),
            "count": int(len(kept)),
            "stride": stride,
            "points": kept.tolist(),
        }

    @app.get(f"{API_PREFIX}/annotations/{{fid}}")
    def get_annotation(fid: str):
        store.require(fid)
        return store.read_annotation(fid)

    @app.put(f"{API_PREFIX}/annotations/{{fid}}")
    def put_annotation(fid: str, body: dict = Body(...)):
        store.require(fid)
        corners = body.get("corners")
        if not isinstance(corners, list) or len(corners) != 4:
            raise HTTPException(
                422, detail="annotation needs exactly 4 corners in order "
                            "TL, TR, BR, BL")
        w, h = store.image_size(fid)
        clean = []
        for i, corner in enumerate(corners):
            if (not isinstance(corner, (list, tuple)) or len(corner) != 2
                    or not all(isinstance(v, (int, float)) for v in corner)):
                raise HTTPException(
                    422, detail=f"corner {i} must be a [u, v] pixel pair")
            u, v = float(corner[0]), float(corner[1])
            if not (0.0 <= u < w and 0.0 <= v < h):
                raise HTTPException(
                    422, detail=f"corner {i} ({u}, {v}) lies outside the "
                                f"{w}x{h} image")
            clean.append([u, v])
        with write_lock:
            stored = store.read_annotation(fid)
            conflict = body.get("revision") != stored["revision"]
            doc = {"frame_id": fid, "corners": clean,
                   "revision": stored["revision"] + 1}
            atomic_write_text(store.annotation_path(fid),
                              json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return {"frame_id": fid, "revision": doc["revision"],
                "conflict": conflict}

    def run_solve(job_id: str, frame_ids: list[str], camera_path: Path):
        try:
            cam = load_camera(camera_path)
            frames = []
            for fid in frame_ids:
                ann = store.read_annotation(fid)
                frames.append(CornerFrame(
                    frame_id=fid,
                    image_corners=np.asarray(ann["corners"], dtype=float),
                    lidar_corners=store.lidar_corners(fid)))
            result = calibrate_extrinsics(CornerObservationSet(tuple(frames)),
                                          cam)
            if not result.report.converged:
                raise NonConvergence(
                    f"solver stopped without converging "
                    f"({result.report.termination})")
            payload = result.to_json_dict()
            with write_lock:
                jobs[job_id].update(status="done", result=payload)
        except ToolkitError as e:
            with write_lock:
                jobs[job_id].update(status="error", error=str(e),
                                    error_kind=_error_kind(e),
                                    exit_code=e.exit_code)
        except Exception as e:  # surfaced to the client, not swallowed
            log.exception("solve job %s failed", job_id)
            with write_lock:
                jobs[job_id].update(status="error", error=str(e),
                                    error_kind="InternalError", exit_code=1)

    @app.post(f"{API_PREFIX}/solve")
    def post_solve(body: dict = Body(...)):
        frame_ids = body.get("frame_ids")
        camera_id = body.get("camera_id")
        if not isinstance(frame_ids, list) or not frame_ids:
            raise HTTPException(422, detail="frame_ids must be a non-empty list")
        if camera_id not in store.cameras:
            raise HTTPException(
                422, detail=f"unknown camera {camera_id!r} "
                            f"(have {sorted(store.cameras)})")
        for fid in frame_ids:
            store.require(fid)
            if len(store.read_annotation(fid)["corners"]) != 4:
                raise HTTPException(
                    422, detail=f"frame {fid!r} is not fully annotated")
            if store.lidar_corners(fid) is None:
                raise HTTPException(
                    422, detail=f"frame {fid!r} has no LiDAR corner file")
        with write_lock:
            job_seq["n"] += 1
            job_id = f"job-{job_seq['n']:06d}"
            jobs[job_id] = {"id": job_id, "status": "running",
                            "frame_ids": list(frame_ids),
                            "camera_id": camera_id}
        thread = threading.Thread(
            target=run_solve, args=(job_id, list(frame_ids),
                                    store.cameras[camera_id]),
            daemon=True)
        thread.start()
        return JSONResponse({"job_id": job_id, "status": "running"},
                            status_code=202)

    @app.get(f"{API_PREFIX}/jobs/{{job_id}}")
    def get_job(job_id: str):
        with write_lock:
            job = jobs.get(job_id)
            if job is None:
                raise HTTPException(404, detail=f"unknown job {job_id!r}")
            return dict(job)

    def resolve_transform(token: str) -> RigidTransform:
        with write_lock:
            job = jobs.get(token)
        if job is not None:
            if job["status"] != "done":
                raise HTTPException(
                    409, detail=f"job {token} is {job['status']}, not done")
            return RigidTransform.from_json_dict(job["result"]["extrinsics"])
        try:
            doc = json.loads(token)
        except json.JSONDecodeError:
            raise HTTPException(
                422, detail="extrinsics must be a finished job id or an "
                            "inline transform JSON object")
        try:
            return RigidTransform.from_json_dict(doc)
        except (ToolkitError, KeyError, TypeError) as e:
            raise HTTPException(422, detail=f"bad transform: {e}")

    @app.get(f"{API_PREFIX}/overlay/{{fid}}")
    def get_overlay(fid: str, extrinsics: str = Query(...),
                    camera: str = Query("cam0"),
                    cap: int = Query(DEFAULT_CLOUD_CAP, ge=1),
                    stride: int = Query(1, ge=1)):
        info = store.require(fid)
        if info["cloud"] is None:
            raise HTTPException(404, detail=f"frame {fid!r} has no cloud")
        if camera not in store.cameras:
            raise HTTPException(422, detail=f"unknown camera {camera!r}")
        T = resolve_transform(extrinsics)
        cam = load_camera(store.cameras[camera])
        points, _ = load_cloud(store.root / info["cloud"])
        points = points[::stride][:cap]
        pixels, depths, indices = project_cloud(points, T, cam)

        out = {
            "frame_id": fid,
            "total": int(len(points)),
            "projected": int(len(indices)),
            "pixels": np.round(pixels, 6).tolist(),
            "depths": np.round(depths, 6).tolist(),
        }
        corners = store.read_annotation(fid)["corners"]
        lidar = store.lidar_corners(fid)
        if len(corners) == 4 and lidar is not None:
            cam_pts = lidar @ T.rotation.T + T.translation
            if np.all(cam_pts[:, 2] > 0):
                from .geometry import project as project_points
                proj = project_points(cam_pts, cam)
                residuals = proj - np.asarray(corners, dtype=float)
                out["corners"] = [
                    {"annotated": list(map(float, corners[i])),
                     "projected": np.round(proj[i], 6).tolist(),
                     "residual": np.round(residuals[i], 6).tolist(),
                     "error": round(float(np.linalg.norm(residuals[i])), 6)}
                    for i in range(4)
                ]
                out["rms"] = round(
                    float(np.sqrt(np.mean(residuals ** 2))), 6)
        return out

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app
