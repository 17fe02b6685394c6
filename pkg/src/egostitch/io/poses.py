"""Camera-to-world pose logs as JSON lines.

One record per frame: {"frame_id": int, "matrix": [16 floats, row-major]}.
The bottom row must be (0, 0, 0, 1); rotation blocks are re-orthonormalized
when mildly off (max |R^T R - I| < 1e-4) and rejected beyond that.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ConsistencyError, FormatError, ValidationError
from ..geometry import Pose
from ..validation import ROTATION_ATOL, nearest_rotation, rotation_defect

REORTHONORMALIZE_LIMIT = 1e-4


def _pose_from_record(record: dict, lineno: int, path) -> tuple[int, Pose]:
    try:
        frame_id = int(record["frame_id"])
        values = record["matrix"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}:{lineno}: pose record needs frame_id and matrix: {exc}") from exc
    m = np.asarray(values, dtype=np.float64)
    if m.shape != (16,):
        raise FormatError(f"{path}:{lineno}: matrix must hold 16 numbers, got {m.shape}")
    m = m.reshape(4, 4)
    if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-9):
        raise ValidationError(f"{path}:{lineno}: bottom row must be (0,0,0,1), got {m[3].tolist()}")
    r = m[:3, :3]
    defect = rotation_defect(r)
    if defect >= REORTHONORMALIZE_LIMIT:
        raise ValidationError(
            f"{path}:{lineno}: rotation block off SO(3) by {defect:.3e} (limit {REORTHONORMALIZE_LIMIT:g})"
        )
    if np.linalg.det(r) < 0.0:
        raise ValidationError(f"{path}:{lineno}: rotation block is a reflection")
    if defect > ROTATION_ATOL:
        r = nearest_rotation(r)
    return frame_id, Pose(r, m[:3, 3])


def load_poses(path) -> list[tuple[int, Pose]]:
    poses: list[tuple[int, Pose]] = []
    seen: set[int] = set()
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            frame_id, pose = _pose_from_record(record, lineno, path)
            if frame_id in seen:
                raise ConsistencyError(f"{path}:{lineno}: duplicate frame_id {frame_id}")
            seen.add(frame_id)
            poses.append((frame_id, pose))
    return poses


def save_poses(path, poses) -> None:
    """Write (frame_id, Pose) pairs as JSON lines, row-major 4x4."""
    with open(path, "w", encoding="ascii") as f:
        for frame_id, pose in poses:
            record = {"frame_id": int(frame_id), "matrix": pose.matrix().reshape(16).tolist()}
            f.write(json.dumps(record) + "\n")
