"""Sequence manifest: the single entry point tying frames, chunks, poses,
depth rasters, mask tracks and evaluation masks together.

A successfully loaded manifest guarantees that every referenced path
resolves, so downstream modules never re-check path preconditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConsistencyError, FormatError, ValidationError
from ..geometry import BinaryMask, DepthFrame, Intrinsics, Pose
from .pfm import read_pfm
from .pgm import load_mask
from .poses import load_poses

EVAL_KINDS = ("dynamics", "fulltime")


@dataclass(frozen=True)
class TrackRecord:
    """One tracked instance: hands are always active, objects activate at onset."""

    track_id: int
    name: str
    category: str  # "hand" | "object"
    mask_pattern: str  # e.g. "masks/track_001/{frame_id:06d}.pgm"
    onset_frame: int | None = None

    def __post_init__(self):
        if self.category not in ("hand", "object"):
            raise ValidationError(f"track {self.track_id}: unknown category {self.category!r}")
        if self.category == "hand" and self.onset_frame is not None:
            raise ValidationError(f"hand track {self.track_id} must not carry an onset")
        if self.category == "object" and self.onset_frame is None:
            raise ValidationError(f"object track {self.track_id} needs an onset frame")

    def mask_path(self, root: Path, frame_id: int) -> Path:
        return root / self.mask_pattern.format(frame_id=frame_id)


@dataclass(frozen=True)
class TrackIndex:
    tracks: tuple[TrackRecord, ...]

    def __post_init__(self):
        ids = [t.track_id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ConsistencyError(f"duplicate track ids in index: {sorted(ids)}")

    def validate(self, frame_count: int) -> None:
        for t in self.tracks:
            if t.onset_frame is not None and not (0 <= t.onset_frame < frame_count):
                raise ValidationError(
                    f"track {t.track_id}: onset {t.onset_frame} outside [0, {frame_count})"
                )

    @property
    def hands(self) -> tuple[TrackRecord, ...]:
        return tuple(t for t in self.tracks if t.category == "hand")

    @property
    def objects(self) -> tuple[TrackRecord, ...]:
        return tuple(t for t in self.tracks if t.category == "object")


def load_track_index(path) -> TrackIndex:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        records = tuple(
            TrackRecord(
                track_id=int(r["track_id"]),
                name=str(r["name"]),
                category=str(r["category"]),
                mask_pattern=str(r["mask_pattern"]),
                onset_frame=None if r.get("onset_frame") is None else int(r["onset_frame"]),
            )
            for r in doc["tracks"]
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed track index: {exc}") from exc
    return TrackIndex(records)


def save_track_index(index: TrackIndex, path) -> None:
    doc = {
        "tracks": [
            {
                "track_id": t.track_id,
                "name": t.name,
                "category": t.category,
                "mask_pattern": t.mask_pattern,
                **({"onset_frame": t.onset_frame} if t.onset_frame is not None else {}),
            }
            for t in index.tracks
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    depth_path: str
    intrinsics: Intrinsics


@dataclass(frozen=True)
class SequenceManifest:
    root: Path
    frame_count: int
    fps: float
    chunk_length: int
    chunk_overlap: int
    frames: tuple[FrameRecord, ...]
    chunk_pose_paths: tuple[str, ...]
    track_index_path: str | None = None
    eval_mask_dirs: dict = field(default_factory=dict)  # kind -> relative dir

    def __post_init__(self):
        if self.chunk_length <= self.chunk_overlap or self.chunk_overlap < 0:
            raise ValidationError(
                f"chunk parameters need K > O >= 0, got K={self.chunk_length}, O={self.chunk_overlap}"
            )
        ids = [f.frame_id for f in self.frames]
        if ids != list(range(self.frame_count)):
            raise ConsistencyError("frame ids must be contiguous 0..T-1")
        for kind in self.eval_mask_dirs:
            if kind not in EVAL_KINDS:
                raise ValidationError(f"unknown evaluation mask kind {kind!r}")

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def validate_paths(self) -> None:
        missing = [f.depth_path for f in self.frames if not self.resolve(f.depth_path).is_file()]
        missing += [p for p in self.chunk_pose_paths if not self.resolve(p).is_file()]
        if self.track_index_path and not self.resolve(self.track_index_path).is_file():
            missing.append(self.track_index_path)
        for kind, rel in self.eval_mask_dirs.items():
            if not self.resolve(rel).is_dir():
                missing.append(rel)
        if missing:
            raise ConsistencyError(f"manifest references missing paths: {missing[:10]}")

    # -- loaders -----------------------------------------------------------

    def load_depth(self, frame_id: int) -> DepthFrame:
        record = self.frames[frame_id]
        raster = read_pfm(self.resolve(record.depth_path))
        h, w = raster.shape
        if (w, h) != (record.intrinsics.width, record.intrinsics.height):
            raise ConsistencyError(
                f"frame {frame_id}: depth raster {w}x{h} does not match manifest "
                f"{record.intrinsics.width}x{record.intrinsics.height}"
            )
        return DepthFrame(frame_id, raster, record.intrinsics)

    def load_chunk_poses(self, chunk_index: int) -> dict[int, Pose]:
        """Poses of the chunk at list position chunk_index (0-based)."""
        return dict(load_poses(self.resolve(self.chunk_pose_paths[chunk_index])))

    def load_tracks(self) -> TrackIndex:
        if self.track_index_path is None:
            raise ConsistencyError("manifest has no track index")
        index = load_track_index(self.resolve(self.track_index_path))
        index.validate(self.frame_count)
        return index

    def load_track_mask(self, track: TrackRecord, frame_id: int) -> BinaryMask | None:
        """Mask of one track at one frame; None when the track is not visible."""
        path = track.mask_path(self.root, frame_id)
        if not path.is_file():
            return None
        return load_mask(path)

    def load_eval_mask(self, kind: str, frame_id: int) -> BinaryMask:
        if kind not in self.eval_mask_dirs:
            raise ConsistencyError(f"manifest carries no {kind!r} evaluation masks")
        path = self.resolve(self.eval_mask_dirs[kind]) / f"{frame_id:06d}.pgm"
        if not path.is_file():
            raise ConsistencyError(f"missing {kind} evaluation mask for frame {frame_id}: {path}")
        return load_mask(path)


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        frames = tuple(
            FrameRecord(
                frame_id=int(r["frame_id"]),
                depth_path=str(r["depth"]),
                intrinsics=Intrinsics(
                    fx=float(r["intrinsics"]["fx"]),
                    fy=float(r["intrinsics"]["fy"]),
                    cx=float(r["intrinsics"]["cx"]),
                    cy=float(r["intrinsics"]["cy"]),
                    width=int(r["width"]),
                    height=int(r["height"]),
                ),
            )
            for r in doc["frames"]
        )
        manifest = SequenceManifest(
            root=path.parent,
            frame_count=int(doc["frame_count"]),
            fps=float(doc["fps"]),
            chunk_length=int(doc["chunking"]["length"]),
            chunk_overlap=int(doc["chunking"]["overlap"]),
            frames=frames,
            chunk_pose_paths=tuple(str(p) for p in doc["chunk_poses"]),
            track_index_path=doc.get("track_index"),
            eval_mask_dirs=dict(doc.get("eval_masks") or {}),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed manifest: {exc}") from exc
    manifest.validate_paths()
    if manifest.track_index_path:
        manifest.load_tracks()  # onset bounds are part of manifest validity
    return manifest


def save_manifest(manifest: SequenceManifest, path) -> None:
    doc = {
        "frame_count": manifest.frame_count,
        "fps": manifest.fps,
        "chunking": {"length": manifest.chunk_length, "overlap": manifest.chunk_overlap},
        "frames": [
            {
                "frame_id": f.frame_id,
                "depth": f.depth_path,
                "width": f.intrinsics.width,
                "height": f.intrinsics.height,
                "intrinsics": {
                    "fx": f.intrinsics.fx,
                    "fy": f.intrinsics.fy,
                    "cx": f.intrinsics.cx,
                    "cy": f.intrinsics.cy,
                },
            }
            for f in manifest.frames
        ],
        "chunk_poses": list(manifest.chunk_pose_paths),
    }
    if manifest.track_index_path:
        doc["track_index"] = manifest.track_index_path
    if manifest.eval_mask_dirs:
        doc["eval_masks"] = dict(manifest.eval_mask_dirs)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
