"""Sequence manifests, keyframe sampling, and timestamp stream alignment.

Manifests keep timestamps as decimal strings on disk so files never pick
up binary-float drift; in memory both the parsed float and the original
string are retained, and saving writes the string back verbatim.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, MissingAnchor, ParseError

MODALITIES = ("pal", "thermal", "polar", "lidar", "imu")
SCENES = ("urban", "residential", "campus", "green", "rural", "forest")
LIGHTING = ("day", "night")
SPLITS = ("train", "test")

DEFAULT_ANCHOR = "lidar"
DEFAULT_TOLERANCE = 0.05
DEFAULT_KEYFRAME_STRIDE = 5


@dataclass(frozen=True)
class StreamEntry:
    timestamp: float
    timestamp_str: str
    path: str


@dataclass(frozen=True)
class StreamIndex:
    modality: str
    entries: tuple[StreamEntry, ...]

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InvariantViolation(
                f"streams.{self.modality}: unknown modality (expected one of "
                f"{', '.join(MODALITIES)})")
        entries = tuple(self.entries)
        ts = [e.timestamp for e in entries]
        for i in range(1, len(ts)):
            if ts[i] <= ts[i - 1]:
                raise InvariantViolation(
                    f"streams.{self.modality}: timestamps not strictly "
                    f"increasing at index {i}")
        object.__setattr__(self, "entries", entries)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([e.timestamp for e in self.entries])

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    scene: str
    lighting: str
    split: str
    streams: dict

    def __post_init__(self):
        if self.scene not in SCENES:
            raise InvariantViolation(
                f"scene: {self.scene!r} not in {{{', '.join(SCENES)}}}")
        if self.lighting not in LIGHTING:
            raise InvariantViolation(
                f"lighting: {self.lighting!r} not in {{{', '.join(LIGHTING)}}}")
        if self.split not in SPLITS:
            raise InvariantViolation(
                f"split: {self.split!r} not in {{{', '.join(SPLITS)}}}")
        if not self.streams:
            raise InvariantViolation("streams: at least one stream required")
        for name, stream in self.streams.items():
            if name != stream.modality:
                raise InvariantViolation(
                    f"streams.{name}: indexed under the wrong modality key")


@dataclass(frozen=True)
class AlignedFrame:
    """One anchor timestamp with its nearest match in every other stream."""

    anchor_timestamp: float
    matches: dict  # modality -> (StreamEntry, offset seconds)


def align_streams(streams, anchor: str = DEFAULT_ANCHOR,
                  tolerance: float = DEFAULT_TOLERANCE) -> list[AlignedFrame]:
    """Nearest-timestamp alignment. Every anchor frame is matched to the
    closest entry of each other stream; if any modality's closest entry is
    farther than the tolerance, the anchor frame is dropped entirely."""
    if tolerance <= 0:
        raise InvariantViolation("tolerance must be positive")
    by_name = {s.modality: s for s in streams}
    if anchor not in by_name:
        raise MissingAnchor(f"no {anchor!r} stream to anchor on")
    others = [s for s in streams if s.modality != anchor]
    other_ts = {s.modality: [e.timestamp for e in s.entries] for s in others}

    out = []
    for entry in by_name[anchor].entries:
        t = entry.timestamp
        matches = {anchor: (entry, 0.0)}
        ok = True
        for s in others:
            ts = other_ts[s.modality]
            if not ts:
                ok = False
                break
            i = bisect.bisect_left(ts, t)
            best = None
            for j in (i - 1, i):
                if 0 <= j < len(ts):
                    off = ts[j] - t
                    if best is None or abs(off) < abs(best[1]):
                        best = (s.entries[j], off)
            if abs(best[1]) > tolerance:
                ok = False
                break
            matches[s.modality] = best
        if ok:
            out.append(AlignedFrame(anchor_timestamp=t, matches=matches))
    return out


def keyframe_sample(frames, stride: int = DEFAULT_KEYFRAME_STRIDE):
    """Every stride-th frame starting at the first."""
    if stride < 1:
        raise InvariantViolation("stride must be >= 1")
    return list(frames)[::stride]


def _parse_timestamp(raw, where: str) -> tuple[float, str]:
    if isinstance(raw, str):
        try:
            return float(raw), raw
        except ValueError as e:
            raise ParseError(f"{where}: bad timestamp {raw!r}") from e
    if isinstance(raw, (int, float)):
        return float(raw), repr(float(raw))
    raise ParseError(f"{where}: timestamp must be a decimal string")


def load_manifest(path) -> SequenceManifest:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    try:
        streams = {}
        for name, rows in doc["streams"].items():
            entries = []
            for k, row in enumerate(rows):
                ts, raw = _parse_timestamp(row["t"], f"streams.{name}[{k}]")
                entries.append(StreamEntry(timestamp=ts, timestamp_str=raw,
                                           path=str(row["path"])))
            streams[name] = StreamIndex(modality=name, entries=tuple(entries))
        return SequenceManifest(sequence_id=str(doc["sequence_id"]),
                                scene=str(doc["scene"]),
                                lighting=str(doc["lighting"]),
                                split=str(doc["split"]),
                                streams=streams)
    except KeyError as e:
        raise ParseError(f"{path}: missing manifest field {e}") from e
    except (TypeError, AttributeError) as e:
        raise ParseError(f"{path}: malformed manifest: {e}") from e


def save_manifest(path, m: SequenceManifest) -> None:
    doc = {
        "sequence_id": m.sequence_id,
        "scene": m.scene,
        "lighting": m.lighting,
        "split": m.split,
        "streams": {
            name: [{"t": e.timestamp_str, "path": e.path}
                   for e in stream.entries]
            for name, stream in m.streams.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
