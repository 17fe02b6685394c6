"""Evaluation metrics: overlap geometry consistency, density-normalized
contamination, depth coverage, camera-center residuals, scale stability
and the auxiliary multi-surface ratio.

Nearest-neighbor queries run through a KD-tree but distances are recomputed
from the returned indices with plain numpy arithmetic, so results are
bit-equal to a linear scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConsistencyError, EmptySetError, ValidationError
from .geometry import BinaryMask, DepthFrame, Intrinsics, PointCloud, Pose, Sim3
from .prior import dilate
from .stitching import pixel_hits
from .validation import check_points

CONTAMINATION_EPS = 1e-8


# -- nearest neighbours --------------------------------------------------


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return check_points(cloud)


def nn_distances(queries, cloud) -> np.ndarray:
    """Exact nearest-neighbor distance from each query to the cloud."""
    target = _as_points(cloud)
    if target.shape[0] == 0:
        raise EmptySetError("nearest-neighbor target set is empty")
    q = _as_points(queries)
    if q.shape[0] == 0:
        return np.empty(0)
    _, idx = cKDTree(target).query(q, k=1)
    diff = q - target[idx]
    return np.sqrt(np.sum(diff * diff, axis=1))


def nn_distance(point, cloud) -> float:
    """min_a ||x - a||_2 over the cloud."""
    return float(nn_distances(np.asarray(point, dtype=np.float64).reshape(1, 3), cloud)[0])


def symmetric_nn_distance(a, b) -> float:
    """Symmetric mean nearest-neighbor distance between two point sets."""
    return 0.5 * (float(nn_distances(a, b).mean()) + float(nn_distances(b, a).mean()))


# -- overlap geometry consistency -----------------------------------------


@dataclass(frozen=True)
class OverlapGeometryResult:
    per_frame: list  # d_geo per overlap frame, None where skipped
    mean: float | None
    skipped: int


def overlap_geometry(frame_sets: Sequence[tuple], transform: Sim3) -> OverlapGeometryResult:
    """Per-frame symmetric NN distance between a chunk's overlap geometry and
    the next chunk's geometry mapped by its fitted transform.

    Each element of frame_sets is (points_current, points_next); frames where
    either side is empty are skipped and counted, not zero-filled.
    """
    per_frame: list = []
    values: list[float] = []
    skipped = 0
    for current, following in frame_sets:
        cur = _as_points(current)
        nxt = _as_points(following)
        if cur.shape[0] == 0 or nxt.shape[0] == 0:
            per_frame.append(None)
            skipped += 1
            continue
        d = symmetric_nn_distance(transform.apply(nxt), cur)
        per_frame.append(d)
        values.append(d)
    mean = float(np.mean(values)) if values else None
    return OverlapGeometryResult(per_frame, mean, skipped)


# -- depth coverage --------------------------------------------------------


@dataclass(frozen=True)
class CoverageResult:
    d_all: float
    d_dyn: float | None  # absent when the dynamic region is empty
    d_static: float | None


def depth_coverage(frame: DepthFrame, dynamic: BinaryMask | None = None) -> CoverageResult:
    """Valid-depth fractions overall and per evaluation region.

    Valid means finite and strictly positive. Regions with zero pixels yield
    absent values, never NaN.
    """
    valid = frame.valid
    total = valid.size
    d_all = float(valid.sum()) / total
    if dynamic is None:
        return CoverageResult(d_all, None, d_all)
    if dynamic.bits.shape != valid.shape:
        raise ConsistencyError(f"mask {dynamic.bits.shape} vs depth {valid.shape}")
    dyn = dynamic.bits
    n_dyn = int(dyn.sum())
    n_static = total - n_dyn
    d_dyn = float(valid[dyn].sum()) / n_dyn if n_dyn else None
    d_static = float(valid[~dyn].sum()) / n_static if n_static else None
    return CoverageResult(d_all, d_dyn, d_static)


# -- density-normalized contamination ---------------------------------------


@dataclass(frozen=True)
class FrameCounts:
    """Projected-point counts for one frame: points landing in each region
    and distinct pixels hit per region."""

    n_dyn: int
    h_dyn: int
    area_dyn: int
    n_static: int
    h_static: int
    area_static: int


def frame_contamination_counts(points, pose: Pose, intrinsics: Intrinsics,
                               dynamic: BinaryMask) -> FrameCounts:
    if (dynamic.width, dynamic.height) != (intrinsics.width, intrinsics.height):
        raise ConsistencyError(
            f"mask {dynamic.width}x{dynamic.height} vs raster "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    rows, cols, _ = pixel_hits(_as_points(points), pose, intrinsics)
    dyn = dynamic.bits
    area_dyn = int(dyn.sum())
    area_static = dyn.size - area_dyn
    in_dyn = dyn[rows, cols]
    pixel_ids = rows * dynamic.width + cols
    h_dyn = int(np.unique(pixel_ids[in_dyn]).size)
    h_static = int(np.unique(pixel_ids[~in_dyn]).size)
    return FrameCounts(
        n_dyn=int(in_dyn.sum()), h_dyn=h_dyn, area_dyn=area_dyn,
        n_static=int((~in_dyn).sum()), h_static=h_static, area_static=area_static,
    )


@dataclass(frozen=True)
class ContaminationResult:
    c_den: float | None
    c_occ: float | None
    c_od: float | None
    frames_dyn: int  # frames entering the dynamic expectations
    frames_static: int


def contamination(counts: Iterable[FrameCounts],
                  eps: float = CONTAMINATION_EPS) -> ContaminationResult:
    """Dyn/static ratios of per-frame-averaged projected-point densities.

    Frames with an empty dynamic (or static) region are excluded from that
    side's expectations; only the overdraw terms are eps-guarded, as defined.
    """
    den_dyn: list[float] = []
    occ_dyn: list[float] = []
    od_dyn: list[float] = []
    den_sta: list[float] = []
    occ_sta: list[float] = []
    od_sta: list[float] = []
    for c in counts:
        if c.area_dyn > 0:
            den_dyn.append(c.n_dyn / c.area_dyn)
            occ_dyn.append(c.h_dyn / c.area_dyn)
            od_dyn.append(c.n_dyn / (c.h_dyn + eps))
        if c.area_static > 0:
            den_sta.append(c.n_static / c.area_static)
            occ_sta.append(c.h_static / c.area_static)
            od_sta.append(c.n_static / (c.h_static + eps))

    def ratio(num: list[float], den: list[float]) -> float | None:
        if not num or not den:
            return None
        mean_den = float(np.mean(den))
        if mean_den == 0.0:
            return None
        return float(np.mean(num)) / mean_den

    return ContaminationResult(
        c_den=ratio(den_dyn, den_sta),
        c_occ=ratio(occ_dyn, occ_sta),
        c_od=ratio(od_dyn, od_sta),
        frames_dyn=len(den_dyn),
        frames_static=len(den_sta),
    )


# -- trajectory sanity ------------------------------------------------------


@dataclass(frozen=True)
class OverlapPair:
    """Corresponded overlap camera centers for one chunk transition."""

    chunk_ids: tuple[int, int]
    frame_ids: tuple[int, ...]
    x: np.ndarray  # (L, 3) current-chunk centers
    y: np.ndarray  # (L, 3) stitched global centers

    def __post_init__(self):
        x = check_points(self.x, "x")
        y = check_points(self.y, "y")
        if x.shape != y.shape or x.shape[0] != len(self.frame_ids):
            raise ConsistencyError("overlap centers and frame ids must correspond row-wise")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def center_residual(pair: OverlapPair, transform: Sim3) -> float:
    """RMSE between stitched global centers and the transformed chunk centers."""
    if pair.x.shape[0] < 1:
        raise ValidationError("center residual needs at least one overlap frame")
    diff = pair.y - transform.apply(pair.x)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


@dataclass(frozen=True)
class ScaleStability:
    mean: float
    geometric_mean: float


def scale_stability(scales: Sequence[float]) -> ScaleStability:
    """Arithmetic (primary) and geometric mean of per-transition scales."""
    if len(scales) == 0:
        raise ValidationError("scale stability needs at least one transition")
    s = np.asarray(scales, dtype=np.float64)
    if (s <= 0).any():
        raise ValidationError("scales must be positive")
    return ScaleStability(float(s.mean()), float(np.exp(np.log(s).mean())))


# -- auxiliary multi-surface ratio ------------------------------------------


@dataclass(frozen=True)
class MultiSurfaceParams:
    eps_vis: float = 0.05
    dilate_radius: int = 3
    min_count: int = 2


def frame_multi_surface(points, frame: DepthFrame, pose: Pose,
                        dynamic: BinaryMask,
                        params: MultiSurfaceParams = MultiSurfaceParams()) -> tuple[int, int]:
    """(multi-layer pixels, conditioned pixels with cnt >= min_count) for one frame.

    Conditioning: static under the dilated dynamic mask, valid depth.
    A projected point is visible iff z <= depth(pixel) + eps_vis; a pixel is
    multi-layer when its sorted visible depths contain a gap > eps_vis.
    """
    rows, cols, z = pixel_hits(_as_points(points), pose, frame.intrinsics)
    conditioned = ~dilate(dynamic, params.dilate_radius).bits & frame.valid
    if rows.size == 0:
        return 0, 0
    ok = conditioned[rows, cols] & (z <= frame.depth[rows, cols] + params.eps_vis)
    rows, cols, z = rows[ok], cols[ok], z[ok]
    if rows.size == 0:
        return 0, 0
    pixel_ids = rows * frame.intrinsics.width + cols
    order = np.lexsort((z, pixel_ids))
    pixel_ids, z = pixel_ids[order], z[order]
    uniq, starts, cnt = np.unique(pixel_ids, return_index=True, return_counts=True)
    eligible = cnt >= params.min_count
    if not eligible.any():
        return 0, 0
    gap = np.append((np.diff(z) > params.eps_vis) & (np.diff(pixel_ids) == 0), False)
    gaps_per_pixel = np.add.reduceat(gap, starts)
    multi = int((gaps_per_pixel[eligible] > 0).sum())
    return multi, int(eligible.sum())


def multi_surface_ratio(per_frame: Iterable[tuple[int, int]]) -> float | None:
    """Mean per-frame ratio of multi-layer pixels among conditioned pixels;
    absent when no frame has a non-empty denominator. Auxiliary only."""
    ratios = [m / d for m, d in per_frame if d > 0]
    return float(np.mean(ratios)) if ratios else None


# -- evaluation mask sets ----------------------------------------------------


@dataclass(frozen=True)
class EvalMaskSet:
    """Per-frame conditioning masks: instantaneous dynamic regions or the
    cumulative dynamic footprint."""

    kind: str  # "dynamics" | "fulltime"
    masks: dict  # frame_id -> BinaryMask

    @classmethod
    def from_manifest(cls, manifest, kind: str) -> "EvalMaskSet":
        masks = {t: manifest.load_eval_mask(kind, t) for t in range(manifest.frame_count)}
        return cls(kind, masks)

    def coverage(self) -> float:
        """Mean active-pixel fraction across frames."""
        fractions = [m.count / m.bits.size for m in self.masks.values()]
        return float(np.mean(fractions)) if fractions else 0.0


# -- aggregated report --------------------------------------------------------


@dataclass
class KindReport:
    """Metrics conditioned on one evaluation mask kind."""

    kind: str
    mask_coverage: float
    b_static: float | None = None
    b_static_skipped: int = 0
    d_dyn: float | None = None
    d_static: float | None = None
    c_den: float | None = None
    c_occ: float | None = None
    c_od: float | None = None
    contamination_frames: int = 0
    rho: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mask_coverage": self.mask_coverage,
            "b_static": self.b_static,
            "b_static_skipped": self.b_static_skipped,
            "d_dyn": self.d_dyn,
            "d_static": self.d_static,
            "c_den": self.c_den,
            "c_occ": self.c_occ,
            "c_od": self.c_od,
            "contamination_frames": self.contamination_frames,
            "rho": self.rho,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KindReport":
        return cls(**doc)


@dataclass
class MetricReport:
    e_cen_mean: float | None
    e_cen_median: float | None
    scale_mean: float | None
    scale_geometric_mean: float | None
    b_all: float | None
    b_all_skipped: int
    d_all: float
    kinds: dict = field(default_factory=dict)  # kind -> KindReport
    transitions: list = field(default_factory=list)  # dicts: chunk_id, e_cen, ...
    per_frame: dict = field(default_factory=dict)

    def validate(self) -> None:
        values = [self.e_cen_mean, self.e_cen_median, self.b_all, self.d_all]
        for k in self.kinds.values():
            values += [k.b_static, k.d_dyn, k.d_static, k.c_den, k.c_occ, k.c_od, k.rho]
            if not 0.0 <= k.mask_coverage <= 1.0:
                raise ValidationError(f"mask coverage {k.mask_coverage} outside [0, 1]")
        for v in values:
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValidationError(f"metric value {v} is not finite and non-negative")

    def to_dict(self) -> dict:
        return {
            "e_cen_mean": self.e_cen_mean,
            "e_cen_median": self.e_cen_median,
            "scale_mean": self.scale_mean,
            "scale_geometric_mean": self.scale_geometric_mean,
            "b_all": self.b_all,
            "b_all_skipped": self.b_all_skipped,
            "d_all": self.d_all,
            "kinds": {k: v.to_dict() for k, v in self.kinds.items()},
            "transitions": self.transitions,
            "per_frame": self.per_frame,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricReport":
        doc = dict(doc)
        kinds = {k: KindReport.from_dict(v) for k, v in doc.pop("kinds", {}).items()}
        return cls(kinds=kinds, **doc)


CSV_COLUMNS = [
    "variant", "mask_kind", "e_cen_mean", "e_cen_median", "b_all", "b_static",
    "d_all", "d_dyn", "d_static", "c_den", "c_occ", "c_od",
    "scale_mean", "scale_geometric_mean", "rho", "mask_coverage",
]


def report_csv_rows(report: MetricReport, variant: str) -> list[dict]:
    """One flat row per evaluation-mask kind, for table assembly."""
    rows = []
    for kind, k in sorted(report.kinds.items()):
        rows.append({
            "variant": variant,
            "mask_kind": kind,
            "e_cen_mean": report.e_cen_mean,
            "e_cen_median": report.e_cen_median,
            "b_all": report.b_all,
            "b_static": k.b_static,
            "d_all": report.d_all,
            "d_dyn": k.d_dyn,
            "d_static": k.d_static,
            "c_den": k.c_den,
            "c_occ": k.c_occ,
            "c_od": k.c_od,
            "scale_mean": report.scale_mean,
            "scale_geometric_mean": report.scale_geometric_mean,
            "rho": k.rho,
            "mask_coverage": k.mask_coverage,
        })
    return rows
