"""Manifest-driven orchestration: suppression-mask generation, stitching,
fusion and metric-report assembly on top of the lower-level operations."""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConsistencyError
from .geometry import BinaryMask, PointCloud
from .io import save_mask
from .io.manifest import SequenceManifest
from .metrics import (
    ContaminationResult,
    EvalMaskSet,
    KindReport,
    MetricReport,
    MultiSurfaceParams,
    contamination,
    depth_coverage,
    frame_contamination_counts,
    frame_multi_surface,
    multi_surface_ratio,
    overlap_geometry,
)
from .prior import NearHandParams, dynamic_prior, instantaneous_mask
from .stitching import back_project, plan_chunks, stitch
from .tokens import TokenGate

DEFAULT_MAX_POINTS_PER_FRAME = 20000


def manifest_plans(manifest: SequenceManifest):
    plans = plan_chunks(manifest.frame_count, manifest.chunk_length, manifest.chunk_overlap)
    if len(plans) != len(manifest.chunk_pose_paths):
        raise ConsistencyError(
            f"manifest lists {len(manifest.chunk_pose_paths)} pose files "
            f"but chunk parameters imply {len(plans)} chunks"
        )
    return plans


def run_stitch(manifest: SequenceManifest, min_overlap: int = 3,
               rigid_fallback: bool = True):
    """Load chunk poses, stitch, and return (plans, chunk_poses, result)."""
    plans = manifest_plans(manifest)
    chunk_poses = [manifest.load_chunk_poses(i) for i in range(len(plans))]
    result = stitch(chunk_poses, plans, min_overlap=min_overlap, rigid_fallback=rigid_fallback)
    return plans, chunk_poses, result


def _owner_frames(plans) -> list[list[int]]:
    owned: list[list[int]] = [[] for _ in plans]
    seen: set[int] = set()
    for i, plan in enumerate(plans):
        for t in plan.frames:
            if t not in seen:
                owned[i].append(t)
                seen.add(t)
    return owned


def _thin(points: np.ndarray, cap: int) -> np.ndarray:
    if cap <= 0 or points.shape[0] <= cap:
        return points
    stride = int(np.ceil(points.shape[0] / cap))
    return points[::stride]


def build_chunk_clouds(manifest: SequenceManifest, plans, chunk_poses,
                       max_points_per_frame: int = DEFAULT_MAX_POINTS_PER_FRAME,
                       keep_masks=None) -> list[PointCloud]:
    """Back-project each chunk's owner frames into its local frame.

    keep_masks: optional frame_id -> BinaryMask of pixels to keep (e.g. the
    complement of a suppression mask)."""
    clouds = []
    for i, owned in enumerate(_owner_frames(plans)):
        parts = []
        for t in owned:
            frame = manifest.load_depth(t)
            keep = keep_masks.get(t) if keep_masks else None
            pts = back_project(frame, chunk_poses[i][t], keep).points
            parts.append(_thin(pts, max_points_per_frame))
        clouds.append(PointCloud(np.vstack(parts)) if parts else PointCloud.empty())
    return clouds


def write_suppression_masks(manifest: SequenceManifest, out_dir, mode: str,
                            near_hand: NearHandParams | None = None,
                            threads: int | None = None) -> list[Path]:
    """Write the per-frame suppression prior as strict 0/255 PGMs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tracks = manifest.load_tracks()

    def build(t: int) -> Path:
        record = manifest.frames[t]
        size = (record.intrinsics.height, record.intrinsics.width)
        masks = {}
        for track in tracks.tracks:
            m = manifest.load_track_mask(track, t)
            if m is not None:
                masks[track.track_id] = m
        if mode == "dynamic_only":
            mask = instantaneous_mask(tracks, masks, size)
        else:
            mask = dynamic_prior(tracks, masks, t, size, near_hand)
        path = out / f"D_{t:06d}.pgm"
        save_mask(mask, path)
        return path

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, range(manifest.frame_count)))


def write_token_masks(mask_paths, out_dir, input_size: tuple[int, int],
                      patch_size: int, threads: int | None = None) -> list[Path]:
    """Token-grid PGMs plus JSON sidecars for externally generated masks."""
    import json

    from .io import load_mask

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gate = TokenGate(input_size=tuple(input_size), patch_size=patch_size).fit()

    def build(path) -> Path:
        path = Path(path)
        token_mask = gate.gate(load_mask(path))
        target = out / (path.stem + "_tokens.pgm")
        save_mask(BinaryMask(token_mask.grid), target)
        sidecar = out / (path.stem + "_tokens.json")
        sidecar.write_text(json.dumps(token_mask.sidecar(), sort_keys=True) + "\n",
                           encoding="ascii")
        return target

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, sorted(Path(p) for p in mask_paths)))


def _overlap_frame_sets(manifest, plans, chunk_poses, transition_index: int,
                        cap: int, keep_bits=None):
    """(Q_current, Q_next) per overlap frame of one transition; keep_bits maps
    frame_id -> bool raster applied to both sides (static conditioning)."""
    plan = plans[transition_index + 1]
    sets = []
    for t in plan.overlap:
        frame = manifest.load_depth(t)
        keep = None
        if keep_bits is not None:
            keep = BinaryMask(keep_bits(t))
        current = back_project(frame, chunk_poses[transition_index][t], keep).points
        following = back_project(frame, chunk_poses[transition_index + 1][t], keep).points
        sets.append((_thin(current, cap), _thin(following, cap)))
    return sets


def compute_metrics(manifest: SequenceManifest, kinds=("dynamics", "fulltime"),
                    max_points_per_frame: int = DEFAULT_MAX_POINTS_PER_FRAME,
                    multi_surface: MultiSurfaceParams = MultiSurfaceParams(),
                    min_overlap: int = 3) -> MetricReport:
    """Assemble the full metric report for a manifest."""
    plans, chunk_poses, result = run_stitch(manifest, min_overlap=min_overlap)
    eval_sets = {kind: EvalMaskSet.from_manifest(manifest, kind) for kind in kinds}

    residuals = result.residuals
    e_cen_mean = float(np.mean(residuals)) if residuals else None
    e_cen_median = float(statistics.median(residuals)) if residuals else None
    scale_mean = float(np.mean(result.scales)) if result.scales else None
    scale_gmean = float(np.exp(np.mean(np.log(result.scales)))) if result.scales else None

    # overlap geometry, unconditioned; breakdown keyed by transition and
    # frame since overlap windows of consecutive transitions can intersect
    b_values: list[float] = []
    b_skipped = 0
    per_frame_geo: dict[str, float | None] = {}
    for i in range(len(plans) - 1):
        sets = _overlap_frame_sets(manifest, plans, chunk_poses, i, max_points_per_frame)
        geo = overlap_geometry(sets, result.transforms[i + 1])
        b_skipped += geo.skipped
        b_values.extend(v for v in geo.per_frame if v is not None)
        for t, v in zip(plans[i + 1].overlap, geo.per_frame):
            per_frame_geo[f"{plans[i + 1].chunk_id}:{t}"] = v
    b_all = float(np.mean(b_values)) if b_values else None

    d_all_values = []
    for t in range(manifest.frame_count):
        d_all_values.append(depth_coverage(manifest.load_depth(t)).d_all)
    d_all = float(np.mean(d_all_values))

    owner = _owner_frames(plans)
    chunk_clouds = build_chunk_clouds(manifest, plans, chunk_poses, max_points_per_frame)

    report = MetricReport(
        e_cen_mean=e_cen_mean,
        e_cen_median=e_cen_median,
        scale_mean=scale_mean,
        scale_geometric_mean=scale_gmean,
        b_all=b_all,
        b_all_skipped=b_skipped,
        d_all=d_all,
        transitions=result.to_dict()["transitions"],
        per_frame={"d_geo": per_frame_geo, "d_all": d_all_values},
    )

    for kind, eval_set in eval_sets.items():
        kind_report = KindReport(kind=kind, mask_coverage=eval_set.coverage())

        # static-conditioned overlap geometry (both sides masked)
        bs_values: list[float] = []
        bs_skipped = 0
        for i in range(len(plans) - 1):
            sets = _overlap_frame_sets(
                manifest, plans, chunk_poses, i, max_points_per_frame,
                keep_bits=lambda t: ~eval_set.masks[t].bits)
            geo = overlap_geometry(sets, result.transforms[i + 1])
            bs_skipped += geo.skipped
            bs_values.extend(v for v in geo.per_frame if v is not None)
        kind_report.b_static = float(np.mean(bs_values)) if bs_values else None
        kind_report.b_static_skipped = bs_skipped

        # depth coverage per region
        dyn_vals: list[float] = []
        static_vals: list[float] = []
        for t in range(manifest.frame_count):
            cov = depth_coverage(manifest.load_depth(t), eval_set.masks[t])
            if cov.d_dyn is not None:
                dyn_vals.append(cov.d_dyn)
            if cov.d_static is not None:
                static_vals.append(cov.d_static)
        kind_report.d_dyn = float(np.mean(dyn_vals)) if dyn_vals else None
        kind_report.d_static = float(np.mean(static_vals)) if static_vals else None

        # contamination and multi-surface over chunk-local clouds
        counts = []
        surface_terms = []
        for i, owned in enumerate(owner):
            cloud = chunk_clouds[i]
            if len(cloud) == 0:
                continue
            for t in owned:
                pose = chunk_poses[i][t]
                counts.append(frame_contamination_counts(
                    cloud, pose, manifest.frames[t].intrinsics, eval_set.masks[t]))
                surface_terms.append(frame_multi_surface(
                    cloud, manifest.load_depth(t), pose, eval_set.masks[t], multi_surface))
        cont: ContaminationResult = contamination(counts)
        kind_report.c_den = cont.c_den
        kind_report.c_occ = cont.c_occ
        kind_report.c_od = cont.c_od
        kind_report.contamination_frames = cont.frames_dyn
        kind_report.rho = multi_surface_ratio(surface_terms)

        report.kinds[kind] = kind_report

    report.validate()
    return report
