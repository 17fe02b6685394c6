"""Bit-exact readers and writers for every interchange format."""

from .manifest import (
    EVAL_KINDS,
    FrameRecord,
    SequenceManifest,
    TrackIndex,
    TrackRecord,
    load_manifest,
    load_track_index,
    save_manifest,
    save_track_index,
)
from .pfm import read_pfm, write_pfm
from .pgm import load_mask, save_mask
from .ply import load_pointcloud, save_pointcloud
from .poses import load_poses, save_poses

__all__ = [
    "EVAL_KINDS",
    "FrameRecord",
    "SequenceManifest",
    "TrackIndex",
    "TrackRecord",
    "load_manifest",
    "load_mask",
    "load_pointcloud",
    "load_poses",
    "load_track_index",
    "read_pfm",
    "save_manifest",
    "save_mask",
    "save_pointcloud",
    "save_poses",
    "save_track_index",
    "write_pfm",
]
