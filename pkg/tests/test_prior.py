import numpy as np
import pytest

from egostitch import BinaryMask, NearHandParams, activated_set, dilate, dynamic_prior, near_hand_pass, object_prior
from egostitch.errors import ConsistencyError, DegenerateInstanceError
from egostitch.io.manifest import TrackIndex, TrackRecord
from egostitch.prior import hand_union, instantaneous_mask, running_union, suppression_masks

SIZE = (16, 16)


def make_tracks(onsets, hands=1):
    records = [TrackRecord(i + 1, f"hand-{i}", "hand", "h/{frame_id}.pgm")
               for i in range(hands)]
    records += [TrackRecord(hands + j + 1, f"obj-{j}", "object", "o/{frame_id}.pgm",
                            onset_frame=onset)
                for j, onset in enumerate(onsets)]
    return TrackIndex(tuple(records))


def mask_with(pixels):
    bits = np.zeros(SIZE, dtype=bool)
    for y, x in pixels:
        bits[y, x] = True
    return BinaryMask(bits)


def block(y0, x0, h, w):
    bits = np.zeros(SIZE, dtype=bool)
    bits[y0:y0 + h, x0:x0 + w] = True
    return BinaryMask(bits)


class TestActivation:
    def test_before_all_onsets(self):
        tracks = make_tracks([5, 10])
        assert activated_set(tracks, 0) == frozenset()

    def test_between_onsets(self):
        tracks = make_tracks([5, 10])
        assert activated_set(tracks, 7) == {2}

    def test_matches_linear_scan(self, rng):
        onsets = rng.integers(0, 50, size=12).tolist()
        tracks = make_tracks(onsets)
        for t in range(50):
            expected = frozenset(
                tr.track_id for tr in tracks.tracks
                if tr.category == "object" and tr.onset_frame <= t
            )
            assert activated_set(tracks, t) == expected

    def test_monotone(self, rng):
        tracks = make_tracks(rng.integers(0, 30, size=8).tolist())
        for t in range(29):
            assert activated_set(tracks, t) <= activated_set(tracks, t + 1)

    def test_hands_never_in_activated_set(self):
        tracks = make_tracks([0], hands=2)
        assert activated_set(tracks, 20) == {3}


def naive_dilate(bits, r):
    out = np.zeros_like(bits)
    h, w = bits.shape
    for y in range(h):
        for x in range(w):
            out[y, x] = bits[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].any()
    return out


class TestDilate:
    def test_radius_zero_is_identity(self, rng):
        mask = BinaryMask(rng.random(SIZE) < 0.3)
        np.testing.assert_array_equal(dilate(mask, 0).bits, mask.bits)

    def test_single_pixel_becomes_block(self):
        out = dilate(mask_with([(5, 5)]), 1)
        expected = np.zeros(SIZE, dtype=bool)
        expected[4:7, 4:7] = True
        np.testing.assert_array_equal(out.bits, expected)

    def test_matches_brute_force(self, rng):
        for r in (1, 2, 3):
            for _ in range(5):
                bits = rng.random(SIZE) < 0.15
                np.testing.assert_array_equal(dilate(BinaryMask(bits), r).bits,
                                              naive_dilate(bits, r))


class TestNearHand:
    def test_fully_inside_passes_any_threshold(self):
        hand = block(2, 2, 8, 8)
        instance = block(4, 4, 2, 2)
        assert near_hand_pass(instance, hand, NearHandParams(radius=0, threshold=1.0))

    def test_disjoint_fails(self):
        assert not near_hand_pass(block(0, 0, 2, 2), block(10, 10, 3, 3),
                                  NearHandParams(radius=0, threshold=0.1))

    def test_threshold_boundary_is_inclusive(self):
        # instance of 4 pixels, exactly 2 inside the hand: ratio 0.5 >= 0.5
        instance = block(0, 0, 1, 4)
        hand = block(0, 0, 1, 2)
        assert near_hand_pass(instance, hand, NearHandParams(radius=0, threshold=0.5))
        assert not near_hand_pass(instance, hand, NearHandParams(radius=0, threshold=0.5 + 1e-9))

    def test_counting_oracle(self, rng):
        params = NearHandParams(radius=2, threshold=0.4)
        for _ in range(20):
            inst_bits = rng.random(SIZE) < 0.2
            if not inst_bits.any():
                inst_bits[0, 0] = True
            hand_bits = rng.random(SIZE) < 0.2
            region = naive_dilate(hand_bits, params.radius)
            expected = (inst_bits & region).sum() / inst_bits.sum() >= params.threshold
            assert near_hand_pass(BinaryMask(inst_bits), BinaryMask(hand_bits), params) == expected

    def test_empty_instance_rejected(self):
        with pytest.raises(DegenerateInstanceError):
            near_hand_pass(BinaryMask.zeros(*SIZE), block(0, 0, 2, 2), NearHandParams())

    def test_size_mismatch(self):
        with pytest.raises(ConsistencyError):
            near_hand_pass(block(0, 0, 2, 2), BinaryMask.zeros(8, 8), NearHandParams())


class TestObjectPrior:
    def test_nothing_activated(self):
        tracks = make_tracks([5])
        masks = {2: block(0, 0, 3, 3)}
        assert object_prior(tracks, masks, 0, SIZE).count == 0

    def test_disjoint_union_adds_areas(self):
        tracks = make_tracks([0, 0])
        masks = {2: block(0, 0, 2, 2), 3: block(8, 8, 3, 3)}
        assert object_prior(tracks, masks, 5, SIZE).count == 4 + 9

    def test_missing_mask_contributes_nothing(self):
        tracks = make_tracks([0, 0])
        masks = {2: block(0, 0, 2, 2)}  # track 3 occluded at this frame
        assert object_prior(tracks, masks, 5, SIZE).count == 4

    def test_filtered_is_subset_of_unfiltered(self, rng):
        tracks = make_tracks([0, 0, 0], hands=1)
        for _ in range(10):
            masks = {1: BinaryMask(rng.random(SIZE) < 0.2)}
            for track_id in (2, 3, 4):
                masks[track_id] = BinaryMask(rng.random(SIZE) < 0.15)
            full = object_prior(tracks, masks, 10, SIZE)
            filtered = object_prior(tracks, masks, 10, SIZE, NearHandParams(2, 0.3))
            assert not (filtered.bits & ~full.bits).any()

    def test_zero_threshold_equals_unfiltered(self, rng):
        tracks = make_tracks([0, 0], hands=1)
        masks = {1: BinaryMask(rng.random(SIZE) < 0.2),
                 2: block(0, 0, 3, 3), 3: block(9, 9, 4, 4)}
        for r in (0, 2, 5):
            filtered = object_prior(tracks, masks, 3, SIZE, NearHandParams(r, 0.0))
            unfiltered = object_prior(tracks, masks, 3, SIZE)
            np.testing.assert_array_equal(filtered.bits, unfiltered.bits)

    def test_full_threshold_keeps_only_contained(self):
        tracks = make_tracks([0, 0], hands=1)
        masks = {1: block(2, 2, 6, 6),
                 2: block(3, 3, 2, 2),    # fully inside the hand
                 3: block(6, 6, 4, 4)}    # sticks out
        out = object_prior(tracks, masks, 0, SIZE, NearHandParams(0, 1.0))
        np.testing.assert_array_equal(out.bits, masks[2].bits)

    def test_size_mismatch_rejected(self):
        tracks = make_tracks([0])
        bad = BinaryMask.zeros(4, 4)
        with pytest.raises(ConsistencyError):
            object_prior(tracks, {2: bad}, 0, SIZE)


class TestDynamicPrior:
    def test_hands_only_before_onsets(self):
        tracks = make_tracks([9], hands=2)
        masks = {1: block(0, 0, 2, 2), 2: block(4, 4, 2, 2), 3: block(10, 10, 3, 3)}
        out = dynamic_prior(tracks, masks, 2, SIZE)
        np.testing.assert_array_equal(out.bits, hand_union(tracks, masks, SIZE).bits)

    def test_always_contains_hands(self, rng):
        tracks = make_tracks([0, 4], hands=1)
        for t in range(8):
            masks = {i: BinaryMask(rng.random(SIZE) < 0.2) for i in (1, 2, 3)}
            out = dynamic_prior(tracks, masks, t, SIZE)
            assert (out.bits | ~masks[1].bits).all()

    def test_idempotent(self, rng):
        tracks = make_tracks([3])
        masks = {1: BinaryMask(rng.random(SIZE) < 0.2), 2: BinaryMask(rng.random(SIZE) < 0.2)}
        a = dynamic_prior(tracks, masks, 5, SIZE)
        b = dynamic_prior(tracks, masks, 5, SIZE)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_matches_incremental_state_machine(self, rng):
        # oracle: explicit mutable accumulator over frames
        onsets = rng.integers(0, 20, size=5).tolist()
        tracks = make_tracks(onsets)
        frame_masks = {
            t: {i: BinaryMask(rng.random(SIZE) < 0.15) for i in range(1, 7)}
            for t in range(20)
        }
        active = set()
        for t in range(20):
            for tr in tracks.objects:
                if tr.onset_frame == t:
                    active.add(tr.track_id)
            expected = frame_masks[t][1].bits.copy()
            for i in sorted(active):
                expected |= frame_masks[t][i].bits
            out = dynamic_prior(tracks, frame_masks[t], t, SIZE)
            np.testing.assert_array_equal(out.bits, expected)


class TestSuppressionSeries:
    def test_static_scene_is_all_zero(self):
        tracks = TrackIndex(())
        series = list(suppression_masks(tracks, lambda i, t: None, 5, SIZE, "cumulative"))
        assert all(mask.count == 0 for _, mask in series)

    def test_modes_differ_exactly_before_onset(self):
        onset = 5
        tracks = make_tracks([onset])
        instance = block(8, 8, 3, 3)
        hand = block(0, 0, 2, 2)
        masks = {1: hand, 2: instance}

        def source(track_id, t):
            return masks.get(track_id)

        dyn = dict(suppression_masks(tracks, source, 10, SIZE, "dynamic_only"))
        cum = dict(suppression_masks(tracks, source, 10, SIZE, "cumulative"))
        for t in range(10):
            difference = dyn[t].bits & ~cum[t].bits
            if t < onset:
                np.testing.assert_array_equal(difference, instance.bits)
            else:
                assert not difference.any()
                np.testing.assert_array_equal(dyn[t].bits, cum[t].bits)

    def test_modes_agree_at_saturation(self, rng):
        tracks = make_tracks([2, 4, 6])
        per_track = {i: BinaryMask(rng.random(SIZE) < 0.2) for i in range(1, 5)}

        def source(track_id, t):
            return per_track[track_id]

        dyn = dict(suppression_masks(tracks, source, 10, SIZE, "dynamic_only"))
        cum = dict(suppression_masks(tracks, source, 10, SIZE, "cumulative"))
        for t in range(6, 10):
            np.testing.assert_array_equal(dyn[t].bits, cum[t].bits)


def test_instantaneous_ignores_onsets():
    tracks = make_tracks([9])
    masks = {1: block(0, 0, 2, 2), 2: block(5, 5, 2, 2)}
    out = instantaneous_mask(tracks, masks, SIZE)
    assert out.count == 8


def test_running_union_is_monotone(rng):
    series = [BinaryMask(rng.random(SIZE) < 0.1) for _ in range(8)]
    acc = list(running_union(series))
    for earlier, later in zip(acc, acc[1:]):
        assert not (earlier.bits & ~later.bits).any()
    np.testing.assert_array_equal(acc[3].bits,
                                  series[0].bits | series[1].bits | series[2].bits | series[3].bits)
