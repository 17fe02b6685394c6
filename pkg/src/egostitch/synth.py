"""Deterministic synthetic scenes with exact ground truth.

Backgrounds are analytic (axis-aligned room or plane subset) so rendered
depth equals ray-intersection depth to machine precision. Per-chunk drift
is injected as a single Sim(3) per chunk, matching the stitcher's model
class: noiseless recovery is exact, separating model error from estimator
error. Dynamic content is a set of orbiting depth discs with matching
instance masks and onsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import BinaryMask, DepthFrame, Intrinsics, Pose, Sim3, compose_sim3_pose
from .io import save_manifest, save_mask, save_poses, save_track_index, write_pfm
from .io.manifest import FrameRecord, SequenceManifest, TrackIndex, TrackRecord
from .prior import running_union
from .stitching import back_project, plan_chunks, voxel_downsample

BOX_BOUNDS = ((-3.0, 3.0), (-2.0, 2.0), (-3.0, 3.0))  # x, y, z extents of the room
PLANES_FACES = (2, 5)  # floor (y max, below camera) and far wall (z max)
BLOB_DEPTH_FRACTION = 0.5
BLOB_FALLBACK_DEPTH = 1.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    scene: str = "box"  # "box" | "planes"
    trajectory: str = "arc"  # "arc" | "lawnmower"
    frame_count: int = 96
    chunk_length: int = 24
    chunk_overlap: int = 12
    width: int = 64
    height: int = 64
    focal: float = 48.0
    fps: float = 30.0
    scale_jitter: float = 0.1  # chunk scale drawn from [1-j, 1+j]
    rot_jitter_deg: float = 5.0
    trans_jitter: float = 0.5
    hand_count: int = 1
    object_count: int = 2
    blob_radius: int = 6
    onsets: tuple[int, ...] | None = None  # one per object; default: evenly spaced
    depth_noise: float = 0.0

    def __post_init__(self):
        if self.scene not in ("box", "planes"):
            raise ConfigError(f"unknown scene {self.scene!r}")
        if self.trajectory not in ("arc", "lawnmower"):
            raise ConfigError(f"unknown trajectory {self.trajectory!r}")
        if self.frame_count < 2:
            raise ConfigError("need at least two frames")
        if self.onsets is not None and len(self.onsets) != self.object_count:
            raise ConfigError(f"{len(self.onsets)} onsets for {self.object_count} objects")

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.focal, self.focal,
                          (self.width - 1) / 2.0, (self.height - 1) / 2.0,
                          self.width, self.height)

    def object_onsets(self) -> tuple[int, ...]:
        if self.onsets is not None:
            return self.onsets
        n = self.object_count
        return tuple(int(self.frame_count * (i + 1) / (n + 1)) for i in range(n))


@dataclass(frozen=True)
class BlobTrack:
    track_id: int
    category: str  # "hand" | "object"
    onset: int | None
    orbit_radius: float  # pixels
    phase: float
    angular_rate: float  # radians per frame
    radius: int  # disc radius, pixels

    def center(self, t: int, intrinsics: Intrinsics) -> tuple[float, float]:
        angle = self.phase + self.angular_rate * t
        return (intrinsics.cx + self.orbit_radius * np.cos(angle),
                intrinsics.cy + self.orbit_radius * np.sin(angle))


@dataclass
class SynthDataset:
    config: SynthConfig
    plans: list
    gt_poses: list  # Pose per frame
    chunk_poses: list  # dict frame_id -> Pose, one per chunk
    drifts: list  # Sim3 per chunk, drifts[0] == identity
    depths: list  # float32 raster per frame: background + blobs, owner-chunk scale
    gt_background: list  # float32 raster per frame: background only, ground-truth scale
    blob_masks: dict  # track_id -> {frame_id -> BinaryMask}
    tracks: TrackIndex
    eval_dynamics: list  # BinaryMask per frame
    eval_fulltime: list
    scene_points: np.ndarray  # ground-truth static geometry, voxel-thinned

    @property
    def intrinsics(self) -> Intrinsics:
        return self.config.intrinsics

    def owner_chunk(self, frame_id: int) -> int:
        """0-based index of the earliest chunk containing the frame."""
        for i, plan in enumerate(self.plans):
            if frame_id < plan.end:
                return i
        raise ConfigError(f"frame {frame_id} beyond the last chunk")

    def depth_frame(self, frame_id: int) -> DepthFrame:
        return DepthFrame(frame_id, self.depths[frame_id], self.intrinsics)

    def dynamic_union(self, frame_id: int) -> BinaryMask:
        bits = np.zeros((self.config.height, self.config.width), dtype=bool)
        for masks in self.blob_masks.values():
            if frame_id in masks:
                bits |= masks[frame_id].bits
        return BinaryMask(bits)


def _look_rotation(forward: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation with +z along `forward`, y pointing down."""
    up = np.array([0.0, 1.0, 0.0])
    f = forward / np.linalg.norm(forward)
    if abs(f @ up) > 0.99:
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(f, up)
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.column_stack([right, down, f])


def _trajectory(config: SynthConfig) -> list[Pose]:
    t = np.arange(config.frame_count)
    if config.trajectory == "arc":
        theta = 1.5 * np.pi * t / config.frame_count
        radius = 1.2
        pos = np.stack([radius * np.cos(theta),
                        0.25 * np.sin(2.0 * theta),
                        radius * np.sin(theta)], axis=1)
        forward = np.stack([np.cos(theta), np.zeros_like(theta), np.sin(theta)], axis=1)
    else:  # lawnmower: straight legs along x, stepping in y, facing the far wall
        legs = 4
        per_leg = int(np.ceil(config.frame_count / legs))
        xs, ys = [], []
        for leg in range(legs):
            frac = np.linspace(-1.5, 1.5, per_leg)
            if leg % 2:
                frac = frac[::-1]
            xs.extend(frac)
            ys.extend([-0.8 + 0.5 * leg] * per_leg)
        pos = np.stack([np.array(xs[:config.frame_count]),
                        np.array(ys[:config.frame_count]),
                        np.zeros(config.frame_count)], axis=1)
        forward = np.tile([0.0, 0.0, 1.0], (config.frame_count, 1))
    return [Pose(_look_rotation(forward[i]), pos[i]) for i in range(config.frame_count)]


def render_background(pose: Pose, intrinsics: Intrinsics, scene: str) -> np.ndarray:
    """Analytic depth of the static scene: smallest positive ray parameter
    against the room faces. Pixels whose ray misses every face get 0."""
    k = intrinsics
    u, v = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dirs = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u, dtype=float)], axis=-1)
    dirs = dirs @ pose.rotation.T
    origin = pose.translation
    faces = []
    for axis, (lo, hi) in enumerate(BOX_BOUNDS):
        faces.append((axis, lo))
        faces.append((axis, hi))
    if scene == "planes":
        faces = [faces[i] for i in PLANES_FACES]
    best = np.full((k.height, k.width), np.inf)
    for axis, value in faces:
        d = dirs[..., axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (value - origin[axis]) / d
        hit = dirs * t[..., None] + origin
        inside = np.ones_like(t, dtype=bool)
        for other in range(3):
            if other == axis:
                continue
            lo, hi = BOX_BOUNDS[other]
            inside &= (hit[..., other] >= lo - 1e-9) & (hit[..., other] <= hi + 1e-9)
        valid = inside & (t > 1e-6) & np.isfinite(t)
        best = np.where(valid & (t < best), t, best)
    return np.where(np.isfinite(best), best, 0.0)


def _disc_bits(center: tuple[float, float], radius: int, height: int, width: int) -> np.ndarray:
    u, v = np.meshgrid(np.arange(width), np.arange(height))
    return (u - center[0]) ** 2 + (v - center[1]) ** 2 <= radius * radius


def _draw_drifts(rng: np.random.Generator, config: SynthConfig, n_chunks: int) -> list[Sim3]:
    drifts = [Sim3.identity()]
    for _ in range(1, n_chunks):
        scale = 1.0 + config.scale_jitter * rng.uniform(-1.0, 1.0)
        angle = np.deg2rad(config.rot_jitter_deg) * rng.uniform(-1.0, 1.0)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        rotation = np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)
        translation = config.trans_jitter * rng.uniform(-1.0, 1.0, size=3)
        drifts.append(Sim3(scale, rotation, translation))
    return drifts


def _draw_blobs(rng: np.random.Generator, config: SynthConfig) -> list[BlobTrack]:
    blobs = []
    onsets = config.object_onsets()
    total = config.hand_count + config.object_count
    for i in range(total):
        is_hand = i < config.hand_count
        # distinct orbit radii keep blob paths disjoint
        orbit = 6.0 + 7.0 * i
        blobs.append(BlobTrack(
            track_id=i + 1,
            category="hand" if is_hand else "object",
            onset=None if is_hand else onsets[i - config.hand_count],
            orbit_radius=orbit,
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            angular_rate=float(rng.uniform(0.05, 0.15)),
            radius=config.blob_radius,
        ))
    return blobs


def generate(config: SynthConfig) -> SynthDataset:
    """Render the full synthetic dataset; the seed fixes every output bit."""
    rng = np.random.default_rng(config.seed)
    plans = plan_chunks(config.frame_count, config.chunk_length, config.chunk_overlap)
    gt_poses = _trajectory(config)
    drifts = _draw_drifts(rng, config, len(plans))
    blobs = _draw_blobs(rng, config)
    intrinsics = config.intrinsics

    chunk_poses = [
        {t: compose_sim3_pose(drifts[i], gt_poses[t]) for t in plan.frames}
        for i, plan in enumerate(plans)
    ]

    owner = np.zeros(config.frame_count, dtype=int)
    seen = set()
    for i, plan in enumerate(plans):
        for t in plan.frames:
            if t not in seen:
                owner[t] = i
                seen.add(t)

    gt_background: list[np.ndarray] = []
    depths: list[np.ndarray] = []
    blob_masks: dict[int, dict[int, BinaryMask]] = {b.track_id: {} for b in blobs}
    eval_dynamics: list[BinaryMask] = []
    for t in range(config.frame_count):
        background = render_background(gt_poses[t], intrinsics, config.scene)
        gt_background.append(background)
        raster = background.copy()
        if config.depth_noise > 0:
            noise = rng.normal(0.0, config.depth_noise, raster.shape)
            raster = np.where(raster > 0, np.maximum(raster + noise, 1e-3), raster)
        # blob depth derives from the un-overridden background so that
        # overlapping discs write identical values
        blob_depth = np.where(raster > 0, BLOB_DEPTH_FRACTION * raster, BLOB_FALLBACK_DEPTH)
        frame_bits = np.zeros(raster.shape, dtype=bool)
        for blob in blobs:
            bits = _disc_bits(blob.center(t, intrinsics), blob.radius,
                              config.height, config.width)
            if bits.any():
                blob_masks[blob.track_id][t] = BinaryMask(bits)
                frame_bits |= bits
        raster = np.where(frame_bits, blob_depth, raster)
        depths.append((drifts[owner[t]].scale * raster).astype(np.float32))
        eval_dynamics.append(BinaryMask(frame_bits))
    eval_fulltime = list(running_union(eval_dynamics))

    tracks = TrackIndex(tuple(
        TrackRecord(
            track_id=b.track_id,
            name=f"{b.category}-{b.track_id}",
            category=b.category,
            mask_pattern=f"masks/track_{b.track_id:03d}/{{frame_id:06d}}.pgm",
            onset_frame=b.onset,
        )
        for b in blobs
    ))

    scene_parts = []
    for t in range(config.frame_count):
        frame = DepthFrame(t, gt_background[t], intrinsics)
        scene_parts.append(back_project(frame, gt_poses[t]).points)
    scene = np.vstack(scene_parts)
    scene = scene[voxel_downsample(scene, 0.05)]

    return SynthDataset(
        config=config, plans=plans, gt_poses=gt_poses, chunk_poses=chunk_poses,
        drifts=drifts, depths=depths, gt_background=gt_background,
        blob_masks=blob_masks, tracks=tracks,
        eval_dynamics=eval_dynamics, eval_fulltime=eval_fulltime,
        scene_points=scene,
    )


def write_dataset(dataset: SynthDataset, out_dir) -> Path:
    """Emit the dataset through the standard interchange formats and return
    the manifest path; the written tree is a complete engine input."""
    root = Path(out_dir)
    config = dataset.config
    (root / "depth").mkdir(parents=True, exist_ok=True)
    (root / "poses").mkdir(exist_ok=True)
    (root / "eval" / "dynamics").mkdir(parents=True, exist_ok=True)
    (root / "eval" / "fulltime").mkdir(parents=True, exist_ok=True)

    frames = []
    for t in range(config.frame_count):
        rel = f"depth/{t:06d}.pfm"
        write_pfm(root / rel, dataset.depths[t])
        frames.append(FrameRecord(t, rel, dataset.intrinsics))
        save_mask(dataset.eval_dynamics[t], root / "eval" / "dynamics" / f"{t:06d}.pgm")
        save_mask(dataset.eval_fulltime[t], root / "eval" / "fulltime" / f"{t:06d}.pgm")

    pose_paths = []
    for i, plan in enumerate(dataset.plans):
        rel = f"poses/chunk_{plan.chunk_id:03d}.jsonl"
        save_poses(root / rel, sorted(dataset.chunk_poses[i].items()))
        pose_paths.append(rel)

    for track in dataset.tracks.tracks:
        (root / "masks" / f"track_{track.track_id:03d}").mkdir(parents=True, exist_ok=True)
        for t, mask in sorted(dataset.blob_masks[track.track_id].items()):
            save_mask(mask, track.mask_path(root, t))
    save_track_index(dataset.tracks, root / "tracks.json")

    manifest = SequenceManifest(
        root=root,
        frame_count=config.frame_count,
        fps=config.fps,
        chunk_length=config.chunk_length,
        chunk_overlap=config.chunk_overlap,
        frames=tuple(frames),
        chunk_pose_paths=tuple(pose_paths),
        track_index_path="tracks.json",
        eval_mask_dirs={"dynamics": "eval/dynamics", "fulltime": "eval/fulltime"},
    )
    manifest_path = root / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
