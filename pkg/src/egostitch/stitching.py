"""Chunk planning, overlap Sim(3) estimation and global stitching.

Chunks are aligned sequentially: the first chunk anchors the global frame
(identity transform, scale 1), and every later chunk is mapped onto the
already-stitched trajectory by Umeyama alignment of overlap camera centers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    ConfigError,
    ConsistencyError,
    DegenerateGeometryError,
    InsufficientOverlapError,
    ValidationError,
)
from .geometry import ChunkPlan, DepthFrame, PointCloud, Pose, Sim3, compose_sim3_pose
from .validation import check_points

log = logging.getLogger(__name__)

COLLINEARITY_RTOL = 1e-9


def plan_chunks(frame_count: int, chunk_length: int, overlap: int) -> list[ChunkPlan]:
    """Overlapping chunk windows: starts at multiples of (K - O), each spanning
    [s, min(s + K, T)); the final chunk may be short."""
    if frame_count < 1:
        raise ConfigError(f"frame count must be >= 1, got {frame_count}")
    if chunk_length < 1 or overlap < 0 or overlap >= chunk_length:
        raise ConfigError(
            f"need chunk length K >= 1 and 0 <= overlap O < K, got K={chunk_length}, O={overlap}"
        )
    stride = chunk_length - overlap
    plans: list[ChunkPlan] = []
    prev_end: int | None = None
    for chunk_id, start in enumerate(range(0, frame_count, stride), start=1):
        end = min(start + chunk_length, frame_count)
        shared = range(start, min(prev_end, end)) if prev_end is not None else range(0)
        plans.append(ChunkPlan(chunk_id, start, end, shared))
        prev_end = end
    return plans


def camera_center(pose: Pose) -> np.ndarray:
    """Camera center under the camera-to-world convention: the translation."""
    return pose.translation


@dataclass(frozen=True)
class SimilarityEstimate:
    """A fitted Sim(3) together with its alignment residual."""

    transform: Sim3
    rmse: float


def _alignment_rmse(transform: Sim3, src: np.ndarray, dst: np.ndarray) -> float:
    residual = dst - transform.apply(src)
    return float(np.sqrt(np.mean(np.sum(residual * residual, axis=1))))


def umeyama(src, dst) -> SimilarityEstimate:
    """Least-squares Sim(3) between corresponded point sets: minimizes
    sum ||dst_k - (s R src_k + t)||^2 with R in SO(3), s > 0.

    Closed form via SVD of the cross-covariance with determinant-sign
    correction. Collinear sources leave the rotation unconstrained and are
    rejected; planar sources are fine.
    """
    x = check_points(src, "src")
    y = check_points(dst, "dst")
    if x.shape != y.shape:
        raise ValidationError(f"src {x.shape} and dst {y.shape} must correspond")
    n = x.shape[0]
    if n < 3:
        raise InsufficientOverlapError(f"similarity estimation needs >= 3 points, got {n}")

    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y

    spread = np.linalg.svd(xc, compute_uv=False)
    if spread[1] <= COLLINEARITY_RTOL * spread[0]:
        raise DegenerateGeometryError(
            "source points are collinear; rotation about their axis is unconstrained"
        )

    cov = yc.T @ xc / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(cov) < 0:
        sign[2] = -1.0
    rank = np.linalg.matrix_rank(cov)
    if rank == 0:
        raise DegenerateGeometryError("zero cross-covariance; destination points carry no spread")
    if rank == 2:
        if np.linalg.det(u) * np.linalg.det(vt) > 0:
            rotation = u @ vt
        else:
            rotation = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        # scale is unaffected by sign[2] here since d[2] == 0
    else:
        rotation = u @ np.diag(sign) @ vt

    var_x = (xc * xc).sum() / n
    scale = float(d @ sign) / var_x
    if scale <= 0.0:
        raise DegenerateGeometryError(f"estimated non-positive scale {scale}")
    translation = mu_y - scale * (rotation @ mu_x)
    transform = Sim3(scale, rotation, translation)
    return SimilarityEstimate(transform, _alignment_rmse(transform, x, y))


def _minimal_line_rotation(xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
    """Rotation closest to the identity that maps the principal direction of
    xc onto that of yc. For collinear sources the least-squares rotation is
    only determined up to a twist about the line; this picks the zero-twist
    representative, so pure-translation drift is recovered exactly."""
    direction_x = np.linalg.svd(xc)[2][0]
    direction_y = np.linalg.svd(yc)[2][0]
    # singular vectors have arbitrary sign; orient them along corresponding motion
    if float((xc @ direction_x) @ (yc @ direction_y)) < 0:
        direction_y = -direction_y
    cos = float(direction_x @ direction_y)
    axis = np.cross(direction_x, direction_y)
    sin = float(np.linalg.norm(axis))
    if sin < 1e-15:
        if cos >= 0:
            return np.eye(3)
        # opposite directions: rotate by pi about any perpendicular axis
        helper = np.array([1.0, 0.0, 0.0])
        if abs(direction_x[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(direction_x, helper)
        axis /= np.linalg.norm(axis)
        sin, cos = 0.0, -1.0
    else:
        axis = axis / sin
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + sin * k + (1.0 - cos) * (k @ k)


def fixed_scale_align(src, dst, scale: float) -> SimilarityEstimate:
    """Rigid alignment with a prescribed scale (degenerate-overlap fallback).

    Non-degenerate sources use the standard SVD solution; collinear sources
    fall back to the minimal (zero-twist) rotation about the line."""
    x = check_points(src, "src")
    y = check_points(dst, "dst")
    if x.shape != y.shape:
        raise ValidationError(f"src {x.shape} and dst {y.shape} must correspond")
    if x.shape[0] < 1:
        raise InsufficientOverlapError("rigid alignment needs at least one point")
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y
    spread = np.linalg.svd(xc, compute_uv=False) if x.shape[0] > 1 else np.zeros(3)
    if spread[0] <= 0.0:
        rotation = np.eye(3)  # a single point constrains translation only
    elif x.shape[0] >= 3 and spread[1] > COLLINEARITY_RTOL * spread[0]:
        cov = yc.T @ xc
        u, _, vt = np.linalg.svd(cov)
        sign = float(np.sign(np.linalg.det(u @ vt))) or 1.0
        rotation = u @ np.diag([1.0, 1.0, sign]) @ vt
    else:
        rotation = _minimal_line_rotation(xc, yc)
    translation = mu_y - scale * (rotation @ mu_x)
    transform = Sim3(scale, rotation, translation)
    return SimilarityEstimate(transform, _alignment_rmse(transform, x, y))


@dataclass(frozen=True)
class TransitionRecord:
    """Alignment of chunk `chunk_id` onto the already-stitched trajectory."""

    chunk_id: int
    scale: float
    rmse: float
    overlap_len: int
    fallback: bool = False


@dataclass(frozen=True)
class StitchResult:
    transforms: tuple[Sim3, ...]  # per chunk, index 0 = chunk 1 = identity
    global_poses: dict  # frame_id -> Pose, taken from the owning chunk
    transitions: tuple[TransitionRecord, ...]

    @property
    def scales(self) -> list[float]:
        return [t.scale for t in self.transitions]

    @property
    def residuals(self) -> list[float]:
        return [t.rmse for t in self.transitions]

    def to_dict(self) -> dict:
        return {
            "chunks": [
                {
                    "chunk_id": i + 1,
                    "scale": s.scale,
                    "rotation": s.rotation.reshape(9).tolist(),
                    "translation": s.translation.tolist(),
                }
                for i, s in enumerate(self.transforms)
            ],
            "transitions": [
                {
                    "chunk_id": t.chunk_id,
                    "e_cen": t.rmse,
                    "overlap_len": t.overlap_len,
                    "scale": t.scale,
                    "fallback": t.fallback,
                }
                for t in self.transitions
            ],
        }


def stitch(chunk_poses: Sequence[Mapping[int, Pose]], plans: Sequence[ChunkPlan],
           min_overlap: int = 3, rigid_fallback: bool = True) -> StitchResult:
    """Sequentially align chunks onto the global frame anchored at chunk 1.

    Every frame receives its global pose from the earliest chunk containing
    it (shortest alignment chain). Degenerate overlaps fall back to a rigid
    alignment carrying the previous transition's scale, with a warning.
    """
    if len(chunk_poses) != len(plans):
        raise ConsistencyError(f"{len(chunk_poses)} pose sets for {len(plans)} chunk plans")
    for plan, poses in zip(plans, chunk_poses):
        missing = [t for t in plan.frames if t not in poses]
        if missing:
            raise ConsistencyError(f"chunk {plan.chunk_id} lacks poses for frames {missing[:5]}")

    transforms: list[Sim3] = [Sim3.identity()]
    transitions: list[TransitionRecord] = []
    global_poses: dict[int, Pose] = {t: chunk_poses[0][t] for t in plans[0].frames}
    prev_scale = 1.0

    for i in range(1, len(plans)):
        plan = plans[i]
        shared = list(plan.overlap)
        if len(shared) < min_overlap:
            raise InsufficientOverlapError(
                f"chunk {plan.chunk_id}: overlap of {len(shared)} frames, need {min_overlap}"
            )
        x = np.array([camera_center(chunk_poses[i][t]) for t in shared])
        y = np.array([camera_center(global_poses[t]) for t in shared])
        try:
            estimate = umeyama(x, y)
            fallback = False
        except DegenerateGeometryError:
            if not rigid_fallback:
                raise
            estimate = fixed_scale_align(x, y, prev_scale)
            fallback = True
            log.warning(
                "chunk %d: degenerate overlap centers, rigid fallback with scale %.6g",
                plan.chunk_id, prev_scale,
            )
        transforms.append(estimate.transform)
        transitions.append(TransitionRecord(
            plan.chunk_id, estimate.transform.scale, estimate.rmse, len(shared), fallback))
        prev_scale = estimate.transform.scale
        for t in plan.frames:
            if t not in global_poses:
                global_poses[t] = compose_sim3_pose(estimate.transform, chunk_poses[i][t])

    return StitchResult(tuple(transforms), global_poses, tuple(transitions))


class ChunkStitcher(BaseEstimator):
    """Estimator wrapper around sequential overlap stitching.

    fit() consumes per-chunk pose maps plus their chunk plans and exposes
    the fitted per-chunk transforms; transform() maps chunk-local points
    into the global frame.
    """

    def __init__(self, min_overlap: int = 3, rigid_fallback: bool = True):
        self.min_overlap = min_overlap
        self.rigid_fallback = rigid_fallback

    def fit(self, chunk_poses: Sequence[Mapping[int, Pose]],
            plans: Sequence[ChunkPlan]) -> "ChunkStitcher":
        result = stitch(chunk_poses, plans,
                        min_overlap=self.min_overlap, rigid_fallback=self.rigid_fallback)
        self.result_ = result
        self.transforms_ = result.transforms
        self.global_poses_ = result.global_poses
        self.scales_ = result.scales
        self.residuals_ = result.residuals
        return self

    def transform(self, points, chunk_id: int) -> np.ndarray:
        """Map points from the chunk-local frame (1-based id) to global."""
        return self.transforms_[chunk_id - 1].apply(points)


def back_project(frame: DepthFrame, pose: Pose, keep=None) -> PointCloud:
    """Lift valid depth pixels to world points: ray (u-cx)/fx, (v-cy)/fy, 1
    scaled by z, then rotated/translated by the camera-to-world pose.
    Pixel centers sit at integer coordinates."""
    valid = frame.valid
    if keep is not None:
        bits = keep.bits if hasattr(keep, "bits") else np.asarray(keep, dtype=bool)
        if bits.shape != valid.shape:
            raise ConsistencyError(f"keep mask {bits.shape} vs depth {valid.shape}")
        valid = valid & bits
    rows, cols = np.nonzero(valid)
    if rows.size == 0:
        return PointCloud.empty()
    z = frame.depth[rows, cols].astype(np.float64)
    k = frame.intrinsics
    rays = np.stack(((cols - k.cx) / k.fx, (rows - k.cy) / k.fy, np.ones_like(z)), axis=1)
    return PointCloud(rays * z[:, None] @ pose.rotation.T + pose.translation)


def project_points(points, pose: Pose, intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous pixel coordinates (u, v) and camera depth z for each point.

    Points with z <= 0 are behind the camera; callers filter on z before
    using (u, v)."""
    pts = check_points(points)
    cam = (pts - pose.translation) @ pose.rotation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return u, v, z


def pixel_hits(points, pose: Pose, intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer pixel (row, col) and depth for points landing inside the
    raster in front of the camera (nearest-integer pixel assignment)."""
    u, v, z = project_points(points, pose, intrinsics)
    cols = np.rint(u).astype(np.int64)
    rows = np.rint(v).astype(np.int64)
    ok = (z > 0) & (cols >= 0) & (cols < intrinsics.width) & (rows >= 0) & (rows < intrinsics.height)
    return rows[ok], cols[ok], z[ok]


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Indices of the first point encountered in each occupied voxel,
    in input order (deterministic, density-equalizing)."""
    if voxel_size <= 0:
        return np.arange(points.shape[0])
    keys = np.floor(points / voxel_size).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def fuse(chunk_clouds: Sequence[PointCloud], result: StitchResult,
         voxel_size: float = 0.0) -> PointCloud:
    """Union of per-chunk clouds mapped by their fitted transforms, with
    optional voxel-grid subsampling (first point per voxel, chunk order)."""
    if len(chunk_clouds) != len(result.transforms):
        raise ConsistencyError(
            f"{len(chunk_clouds)} clouds for {len(result.transforms)} chunk transforms"
        )
    parts = []
    ids = []
    for i, cloud in enumerate(chunk_clouds):
        if len(cloud) == 0:
            continue
        parts.append(result.transforms[i].apply(cloud.points))
        ids.append(np.full(len(cloud), i + 1, dtype=np.int32))
    if not parts:
        return PointCloud.empty()
    points = np.vstack(parts)
    chunk_ids = np.concatenate(ids)
    keep = voxel_downsample(points, voxel_size)
    return PointCloud(points[keep], chunk_ids[keep])
