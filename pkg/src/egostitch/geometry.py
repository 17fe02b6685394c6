"""Core geometric and raster value types.

Everything here is immutable after construction (arrays are stored
read-only), so instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .validation import (
    check_mask_bits,
    check_points,
    check_rotation,
    check_vector3,
    readonly,
)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: p_world = R p_cam + t."""

    rotation: np.ndarray  # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", readonly(check_rotation(self.rotation)))
        object.__setattr__(self, "translation", readonly(check_vector3(self.translation, "translation")))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValidationError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-9):
            raise ValidationError(f"pose matrix bottom row must be (0,0,0,1), got {m[3]}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def center(self) -> np.ndarray:
        """Camera center in the world frame (the translation component)."""
        return self.translation

    def apply(self, points) -> np.ndarray:
        pts = check_points(points)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first, then `self`."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


@dataclass(frozen=True)
class Sim3:
    """Similarity transform: p' = s R p + t, with s > 0 and R in SO(3)."""

    scale: float
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        s = float(self.scale)
        if not np.isfinite(s) or s <= 0.0:
            raise ValidationError(f"scale must be positive and finite, got {s}")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", readonly(check_rotation(self.rotation)))
        object.__setattr__(self, "translation", readonly(check_vector3(self.translation, "translation")))

    @classmethod
    def identity(cls) -> "Sim3":
        return cls(1.0, np.eye(3), np.zeros(3))

    def is_identity(self) -> bool:
        return (self.scale == 1.0
                and np.array_equal(self.rotation, np.eye(3))
                and np.array_equal(self.translation, np.zeros(3)))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        pts = check_points(points)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def inverse(self) -> "Sim3":
        rt = self.rotation.T
        inv_s = 1.0 / self.scale
        return Sim3(inv_s, rt, -inv_s * (rt @ self.translation))

    def compose(self, other: "Sim3") -> "Sim3":
        """self ∘ other: apply `other` first, then `self`."""
        return Sim3(self.scale * other.scale,
                    self.rotation @ other.rotation,
                    self.scale * (self.rotation @ other.translation) + self.translation)


def apply_sim3(transform: Sim3, point) -> np.ndarray:
    """Map a single 3-vector through a similarity transform: s R p + t."""
    p = check_vector3(point, "point")
    return transform.scale * (transform.rotation @ p) + transform.translation


def compose_sim3_pose(transform: Sim3, pose: Pose) -> Pose:
    """Map a camera-to-world pose into the frame defined by a Sim(3).

    The rotation stays in SO(3); the scale acts on the translational
    component only, so camera centers transform exactly like points:
    R' = R_s R, t' = s R_s t + t_s.
    """
    return Pose(transform.rotation @ pose.rotation,
                transform.scale * (transform.rotation @ pose.translation) + transform.translation)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus the raster size they refer to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside raster {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DepthFrame:
    """Per-frame depth raster; entries that are 0 or non-finite are invalid."""

    frame_id: int
    depth: np.ndarray  # (H, W) float32
    intrinsics: Intrinsics

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float32)
        if depth.ndim != 2:
            raise ValidationError(f"depth must be 2-D, got ndim={depth.ndim}")
        h, w = depth.shape
        if (w, h) != (self.intrinsics.width, self.intrinsics.height):
            from .errors import ConsistencyError

            raise ConsistencyError(
                f"depth raster {w}x{h} does not match intrinsics "
                f"{self.intrinsics.width}x{self.intrinsics.height}"
            )
        object.__setattr__(self, "depth", readonly(depth))

    @property
    def valid(self) -> np.ndarray:
        """Boolean raster of pixels with finite, strictly positive depth."""
        d = self.depth
        return np.isfinite(d) & (d > 0)


@dataclass(frozen=True)
class BinaryMask:
    """Strict binary raster; serialized form uses byte values 0 and 255 only."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        object.__setattr__(self, "bits", readonly(check_mask_bits(self.bits)))

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        """Number of active pixels."""
        return int(self.bits.sum())

    def union(self, other: "BinaryMask") -> "BinaryMask":
        from .validation import check_same_shape

        check_same_shape(self.bits, other.bits, "masks")
        return BinaryMask(self.bits | other.bits)


@dataclass(frozen=True)
class PointCloud:
    """Points in scene units, optionally tagged with a source chunk id."""

    points: np.ndarray  # (N, 3) float64, finite
    chunk_ids: np.ndarray | None = None  # (N,) int32, optional

    def __post_init__(self):
        pts = check_points(self.points, "points")
        object.__setattr__(self, "points", readonly(pts))
        if self.chunk_ids is not None:
            ids = np.asarray(self.chunk_ids, dtype=np.int32)
            if ids.shape != (pts.shape[0],):
                raise ValidationError(
                    f"chunk_ids shape {ids.shape} does not match {pts.shape[0]} points"
                )
            object.__setattr__(self, "chunk_ids", readonly(ids))

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)))

    def transformed(self, s: Sim3) -> "PointCloud":
        if len(self) == 0:
            return self
        return PointCloud(s.apply(self.points), self.chunk_ids)


@dataclass(frozen=True)
class ChunkPlan:
    """Half-open frame window [start, end) with its overlap into the predecessor.

    Chunk ids are 1-based; the first chunk has an empty overlap. A plan
    produced with overlap 0 also has empty overlaps and cannot be stitched.
    """

    chunk_id: int
    start: int
    end: int  # exclusive
    overlap: range = field(default_factory=lambda: range(0))

    def __post_init__(self):
        if self.start >= self.end:
            raise ValidationError(f"chunk [{self.start}, {self.end}) is empty")
        if len(self.overlap) and self.overlap[0] != self.start:
            raise ValidationError("overlap must begin at the chunk start")

    @property
    def frames(self) -> range:
        return range(self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start
