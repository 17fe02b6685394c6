"""Interaction-activated dynamic prior masks.

Hands are suppressed at every frame; objects are suppressed from their
interaction onset onward (cumulative activation). Activation is recomputed
from onsets each frame rather than accumulated, so frame order can never
change the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np
from scipy import ndimage

from .errors import ConsistencyError, DegenerateInstanceError, ValidationError
from .geometry import BinaryMask
from .io.manifest import TrackIndex

MaskSource = Callable[[int, int], BinaryMask | None]  # (track_id, frame) -> mask

MODES = ("dynamic_only", "cumulative")


@dataclass(frozen=True)
class NearHandParams:
    """Hand-proximity filter: keep an instance whose overlap with the
    dilated hand union reaches the threshold fraction."""

    radius: int = 3
    threshold: float = 0.5

    def __post_init__(self):
        if self.radius < 0:
            raise ValidationError(f"dilation radius must be >= 0, got {self.radius}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError(f"threshold must lie in [0, 1], got {self.threshold}")


def activated_set(tracks: TrackIndex, t: int) -> frozenset[int]:
    """Ids of object tracks whose onset has passed at frame t (hands excluded)."""
    return frozenset(tr.track_id for tr in tracks.objects if tr.onset_frame <= t)


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Chebyshev dilation: square structuring element of side 2r+1."""
    if radius < 0:
        raise ValidationError(f"dilation radius must be >= 0, got {radius}")
    if radius == 0 or not mask.bits.any():
        return mask
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return BinaryMask(ndimage.binary_dilation(mask.bits, structure=structure))


def near_hand_pass(instance: BinaryMask, hand_union: BinaryMask, params: NearHandParams) -> bool:
    """True iff |instance ∩ dilate(hands, r)| / |instance| >= threshold."""
    if instance.bits.shape != hand_union.bits.shape:
        raise ConsistencyError(
            f"instance {instance.bits.shape} vs hand union {hand_union.bits.shape}"
        )
    area = instance.count
    if area == 0:
        raise DegenerateInstanceError("near-hand ratio undefined for an empty instance mask")
    region = dilate(hand_union, params.radius)
    overlap = int((instance.bits & region.bits).sum())
    return overlap / area >= params.threshold


def _union(masks: Iterable[BinaryMask], size: tuple[int, int]) -> BinaryMask:
    bits = np.zeros(size, dtype=bool)
    for m in masks:
        if m.bits.shape != size:
            raise ConsistencyError(f"mask shape {m.bits.shape} does not match frame size {size}")
        bits |= m.bits
    return BinaryMask(bits)


def hand_union(tracks: TrackIndex, masks: Mapping[int, BinaryMask],
               size: tuple[int, int]) -> BinaryMask:
    """Union of all hand instance masks present at the frame."""
    return _union((masks[tr.track_id] for tr in tracks.hands if tr.track_id in masks), size)


def object_prior(tracks: TrackIndex, masks: Mapping[int, BinaryMask], t: int,
                 size: tuple[int, int],
                 near_hand: NearHandParams | None = None) -> BinaryMask:
    """Union of activated object masks at frame t, optionally hand-filtered.

    A track with no mask at t (occluded or out of view) contributes nothing;
    its activation still persists. Empty instance masks are skipped by the
    near-hand filter rather than rejected.
    """
    active = activated_set(tracks, t)
    candidates = [masks[i] for i in sorted(active) if i in masks]
    if near_hand is not None:
        hands = hand_union(tracks, masks, size)
        candidates = [m for m in candidates
                      if m.count > 0 and near_hand_pass(m, hands, near_hand)]
    return _union(candidates, size)


def dynamic_prior(tracks: TrackIndex, masks: Mapping[int, BinaryMask], t: int,
                  size: tuple[int, int],
                  near_hand: NearHandParams | None = None) -> BinaryMask:
    """Final suppression mask: always-on hands unioned with activated objects."""
    return hand_union(tracks, masks, size).union(object_prior(tracks, masks, t, size, near_hand))


def instantaneous_mask(tracks: TrackIndex, masks: Mapping[int, BinaryMask],
                       size: tuple[int, int]) -> BinaryMask:
    """Union of every instance mask present at the frame, ignoring onsets."""
    return _union((masks[tr.track_id] for tr in tracks.tracks if tr.track_id in masks), size)


def suppression_masks(tracks: TrackIndex, source: MaskSource, frame_count: int,
                      size: tuple[int, int], mode: str,
                      near_hand: NearHandParams | None = None) -> Iterator[tuple[int, BinaryMask]]:
    """Per-frame suppression mask series.

    dynamic_only: hands plus whatever instance masks exist at t, no activation.
    cumulative:   hands plus objects activated by their onset (the full prior).
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    for t in range(frame_count):
        masks = {tr.track_id: m for tr in tracks.tracks
                 if (m := source(tr.track_id, t)) is not None}
        if mode == "dynamic_only":
            yield t, instantaneous_mask(tracks, masks, size)
        else:
            yield t, dynamic_prior(tracks, masks, t, size, near_hand)


def running_union(series: Iterable[BinaryMask]) -> Iterator[BinaryMask]:
    """Cumulative union over a mask series (footprint construction)."""
    acc: np.ndarray | None = None
    for mask in series:
        acc = mask.bits.copy() if acc is None else (acc | mask.bits)
        yield BinaryMask(acc)
