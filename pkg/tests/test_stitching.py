import numpy as np
import pytest

from egostitch import (
    ChunkStitcher,
    DepthFrame,
    Intrinsics,
    PointCloud,
    Pose,
    Sim3,
    back_project,
    camera_center,
    compose_sim3_pose,
    fuse,
    plan_chunks,
    stitch,
    umeyama,
)
from egostitch.errors import (
    ConfigError,
    ConsistencyError,
    DegenerateGeometryError,
    InsufficientOverlapError,
)
from egostitch.geometry import BinaryMask
from egostitch.stitching import fixed_scale_align, pixel_hits, project_points, voxel_downsample

from conftest import random_rotation, random_sim3


class TestPlanChunks:
    def test_full_rate_sequence_constants(self):
        plans = plan_chunks(3565, 180, 90)
        assert len(plans) == 40
        assert plans[0].start == 0 and plans[-1].end == 3565

    def test_downsampled_sequence_constants(self):
        assert len(plan_chunks(713, 180, 90)) == 8

    def test_single_chunk_when_longer_than_video(self):
        plans = plan_chunks(100, 200, 90)
        assert len(plans) == 1
        assert (plans[0].start, plans[0].end) == (0, 100)

    def test_coverage_and_overlap(self, rng):
        for _ in range(30):
            k = int(rng.integers(2, 60))
            o = int(rng.integers(0, k))
            t = int(rng.integers(1, 400))
            plans = plan_chunks(t, k, o)
            covered = sorted({f for p in plans for f in p.frames})
            assert covered == list(range(t))
            for prev, cur in zip(plans, plans[1:]):
                shared = set(prev.frames) & set(cur.frames)
                assert shared == set(cur.overlap)
                assert len(cur.overlap) == min(o, prev.end - cur.start)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            plan_chunks(100, 90, 90)
        with pytest.raises(ConfigError):
            plan_chunks(100, 90, 100)
        with pytest.raises(ConfigError):
            plan_chunks(0, 10, 5)


class TestCameraCenter:
    def test_identity(self):
        np.testing.assert_array_equal(camera_center(Pose.identity()), np.zeros(3))

    def test_translation_is_the_center(self, rng):
        pose = Pose(random_rotation(rng), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(camera_center(pose), [1.0, 2.0, 3.0])

    def test_inverse_pose_oracle(self, rng):
        # world origin expressed in camera coordinates must equal -R^T c
        for _ in range(10):
            pose = Pose(random_rotation(rng), rng.normal(size=3))
            origin_in_cam = pose.inverse().apply(np.zeros((1, 3)))[0]
            np.testing.assert_allclose(origin_in_cam, -pose.rotation.T @ camera_center(pose),
                                       atol=1e-12)


def spread_points(rng, n):
    return rng.normal(size=(n, 3)) * np.array([2.0, 1.0, 1.5]) + rng.normal(size=3)


class TestUmeyama:
    def test_identity_fit(self, rng):
        x = spread_points(rng, 10)
        est = umeyama(x, x)
        assert est.rmse < 1e-12
        np.testing.assert_allclose(est.transform.matrix(), np.eye(4), atol=1e-12)

    def test_pure_scale(self, rng):
        x = spread_points(rng, 8)
        est = umeyama(x, 2.0 * x)
        assert abs(est.transform.scale - 2.0) < 1e-9
        np.testing.assert_allclose(est.transform.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(est.transform.translation, np.zeros(3), atol=1e-9)

    def test_generate_transform_recover(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 50))
            truth = random_sim3(rng)
            x = spread_points(rng, n)
            est = umeyama(x, truth.apply(x))
            assert est.rmse < 1e-9
            assert abs(est.transform.scale - truth.scale) < 1e-9 * truth.scale
            np.testing.assert_allclose(est.transform.rotation, truth.rotation, atol=1e-9)
            np.testing.assert_allclose(est.transform.translation, truth.translation,
                                       rtol=1e-9, atol=1e-9)

    def test_three_points_are_enough(self, rng):
        # L = 3 is always planar; the rank-2 branch must still recover exactly
        truth = random_sim3(rng)
        x = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        est = umeyama(x, truth.apply(x))
        assert est.rmse < 1e-9
        np.testing.assert_allclose(est.transform.rotation, truth.rotation, atol=1e-8)

    def test_noise_shows_up_in_residual(self, rng):
        sigma = 0.01
        x = spread_points(rng, 40)
        truth = random_sim3(rng)
        y = truth.apply(x) + rng.normal(scale=sigma, size=x.shape)
        est = umeyama(x, y)
        assert 0.3 * sigma < est.rmse < 3.0 * sigma

    def test_too_few_points(self):
        with pytest.raises(InsufficientOverlapError):
            umeyama(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_collinear_rejected(self, rng):
        x = np.outer(np.linspace(0.0, 1.0, 10), np.array([1.0, 2.0, 3.0]))
        y = random_sim3(rng).apply(x)
        with pytest.raises(DegenerateGeometryError):
            umeyama(x, y)

    def test_sim3_beats_rigid_restriction(self, rng):
        # optimal Sim(3) residual is never worse than any fixed-scale fit
        for _ in range(20):
            x = spread_points(rng, 15)
            y = random_sim3(rng).apply(x) + rng.normal(scale=0.05, size=x.shape)
            full = umeyama(x, y)
            rigid = fixed_scale_align(x, y, 1.0)
            assert full.rmse <= rigid.rmse + 1e-12


class TestFixedScaleAlign:
    def test_recovers_rigid_motion(self, rng):
        x = spread_points(rng, 12)
        r = random_rotation(rng)
        t = rng.normal(size=3)
        est = fixed_scale_align(x, x @ r.T + t, 1.0)
        np.testing.assert_allclose(est.transform.rotation, r, atol=1e-9)
        np.testing.assert_allclose(est.transform.translation, t, atol=1e-9)

    def test_collinear_translation_drift_gives_zero_twist(self, rng):
        # the degenerate least-squares family is resolved toward identity
        line = np.outer(np.linspace(0.0, 2.0, 8), np.array([1.0, 0.3, -0.2]))
        offset = rng.normal(size=3)
        est = fixed_scale_align(line + offset, line, 1.0)
        np.testing.assert_allclose(est.transform.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(est.transform.translation, -offset, atol=1e-12)
        assert est.rmse < 1e-12

    def test_collinear_rotated_line_maps_exactly(self, rng):
        line = np.outer(np.linspace(-1.0, 1.0, 9), np.array([0.0, 1.0, 0.0]))
        r = random_rotation(rng)
        est = fixed_scale_align(line, line @ r.T, 1.0)
        assert est.rmse < 1e-9  # line mapped onto line despite twist ambiguity

    def test_opposite_direction_lines(self):
        line = np.outer(np.linspace(0.0, 1.0, 5), np.array([1.0, 0.0, 0.0]))
        est = fixed_scale_align(line, -line, 1.0)
        assert est.rmse < 1e-9


def arc_poses(rng, n, radius=1.0):
    poses = []
    for i in range(n):
        theta = 2.0 * np.pi * i / max(n, 1) * 0.6
        center = np.array([radius * np.cos(theta), 0.1 * np.sin(3 * theta), radius * np.sin(theta)])
        poses.append(Pose(random_rotation(rng), center))
    return poses


def chunked(poses, plans, drifts):
    return [
        {t: compose_sim3_pose(drifts[i], poses[t]) for t in plan.frames}
        for i, plan in enumerate(plans)
    ]


class TestStitch:
    def test_single_chunk_is_identity(self, rng):
        plans = plan_chunks(10, 20, 5)
        poses = arc_poses(rng, 10)
        result = stitch([{t: poses[t] for t in range(10)}], plans)
        assert result.transforms[0].is_identity()
        assert result.transforms[0].scale == 1.0
        for t in range(10):
            np.testing.assert_array_equal(result.global_poses[t].matrix(), poses[t].matrix())

    def test_two_chunk_known_drift(self, rng):
        plans = plan_chunks(30, 20, 5)
        assert len(plans) == 2
        poses = arc_poses(rng, 30)
        drift = random_sim3(rng)
        result = stitch(chunked(poses, plans, [Sim3.identity(), drift]), plans)
        recovered = result.transforms[1]
        # the fitted transform undoes the injected drift
        expected = drift.inverse()
        np.testing.assert_allclose(recovered.scale, expected.scale, rtol=1e-9)
        np.testing.assert_allclose(recovered.rotation, expected.rotation, atol=1e-9)
        np.testing.assert_allclose(recovered.translation, expected.translation, atol=1e-9)
        for t in plans[1].overlap:
            drifted_center = compose_sim3_pose(drift, poses[t]).center
            np.testing.assert_allclose(recovered.apply(drifted_center.reshape(1, 3))[0],
                                       poses[t].center, atol=1e-9)
        assert result.transitions[0].rmse < 1e-9

    def test_chain_recovers_ground_truth(self, rng):
        plans = plan_chunks(60, 20, 10)
        poses = arc_poses(rng, 60)
        drifts = [Sim3.identity()] + [random_sim3(rng) for _ in range(len(plans) - 1)]
        result = stitch(chunked(poses, plans, drifts), plans)
        for i, drift in enumerate(drifts):
            np.testing.assert_allclose(result.transforms[i].scale, 1.0 / drift.scale, rtol=1e-9)
        for t in range(60):
            np.testing.assert_allclose(result.global_poses[t].center, poses[t].center, atol=1e-8)
        assert all(tr.rmse < 1e-9 for tr in result.transitions)
        assert not any(tr.fallback for tr in result.transitions)

    def test_deterministic(self, rng):
        plans = plan_chunks(40, 16, 8)
        poses = arc_poses(rng, 40)
        drifts = [Sim3.identity()] + [random_sim3(rng) for _ in range(len(plans) - 1)]
        chunk_poses = chunked(poses, plans, drifts)
        a = stitch(chunk_poses, plans)
        b = stitch(chunk_poses, plans)
        for sa, sb in zip(a.transforms, b.transforms):
            assert sa.scale == sb.scale
            np.testing.assert_array_equal(sa.rotation, sb.rotation)
            np.testing.assert_array_equal(sa.translation, sb.translation)

    def test_missing_overlap_pose(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        chunk_poses = chunked(poses, plans, [Sim3.identity(), Sim3.identity()])
        del chunk_poses[1][16]
        with pytest.raises(ConsistencyError):
            stitch(chunk_poses, plans)

    def test_collinear_overlap_uses_fallback(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = [Pose(np.eye(3), np.array([0.1 * t, 0.0, 0.0])) for t in range(30)]
        drift = Sim3(1.0, np.eye(3), np.array([0.0, 0.5, 0.0]))
        result = stitch(chunked(poses, plans, [Sim3.identity(), drift]), plans)
        assert result.transitions[0].fallback
        assert result.transitions[0].scale == 1.0  # carried from the anchor transition
        assert result.transitions[0].rmse < 1e-9

    def test_fallback_can_be_disabled(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = [Pose(np.eye(3), np.array([0.1 * t, 0.0, 0.0])) for t in range(30)]
        chunk_poses = chunked(poses, plans, [Sim3.identity(), Sim3.identity()])
        with pytest.raises(DegenerateGeometryError):
            stitch(chunk_poses, plans, rigid_fallback=False)

    def test_frame_owned_by_earliest_chunk(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        drift = random_sim3(rng)
        result = stitch(chunked(poses, plans, [Sim3.identity(), drift]), plans)
        # overlap frames [15, 20) belong to chunk 1: global pose equals chunk-1 pose
        for t in range(15, 20):
            np.testing.assert_array_equal(result.global_poses[t].matrix(), poses[t].matrix())


class TestChunkStitcher:
    def test_fit_exposes_result(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        drifts = [Sim3.identity(), random_sim3(rng)]
        est = ChunkStitcher().fit(chunked(poses, plans, drifts), plans)
        assert len(est.transforms_) == 2
        assert est.scales_ == [est.transforms_[1].scale]
        pts = rng.normal(size=(5, 3))
        np.testing.assert_allclose(est.transform(pts, chunk_id=2),
                                   est.transforms_[1].apply(pts), atol=1e-12)

    def test_sklearn_params(self):
        est = ChunkStitcher(min_overlap=5, rigid_fallback=False)
        assert est.get_params() == {"min_overlap": 5, "rigid_fallback": False}


def small_intrinsics():
    return Intrinsics(fx=50.0, fy=40.0, cx=7.5, cy=5.5, width=16, height=12)


class TestBackProject:
    def test_principal_point(self):
        k = Intrinsics(10.0, 10.0, 3.0, 2.0, width=8, height=6)
        depth = np.zeros((6, 8), dtype=np.float32)
        depth[2, 3] = 1.0  # pixel exactly at the principal point
        cloud = back_project(DepthFrame(0, depth, k), Pose.identity())
        np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 1.0]], atol=1e-12)

    def test_depth_scales_camera_ray(self):
        k = small_intrinsics()
        for z in (1.0, 2.0):
            depth = np.zeros((12, 16), dtype=np.float32)
            depth[3, 11] = z
            cloud = back_project(DepthFrame(0, depth, k), Pose.identity())
            expected = z * np.array([(11 - k.cx) / k.fx, (3 - k.cy) / k.fy, 1.0])
            np.testing.assert_allclose(cloud.points[0], expected, rtol=1e-6)

    def test_reprojection_round_trip(self, rng):
        k = small_intrinsics()
        for _ in range(5):
            depth = rng.uniform(0.5, 4.0, size=(12, 16)).astype(np.float32)
            pose = Pose(random_rotation(rng), rng.normal(size=3))
            cloud = back_project(DepthFrame(0, depth, k), pose)
            u, v, z = project_points(cloud.points, pose, k)
            uu, vv = np.meshgrid(np.arange(16), np.arange(12))
            np.testing.assert_allclose(u, uu.ravel(), atol=1e-6)
            np.testing.assert_allclose(v, vv.ravel(), atol=1e-6)
            np.testing.assert_allclose(z, depth.ravel(), rtol=1e-6)

    def test_keep_mask_filters_pixels(self, rng):
        k = small_intrinsics()
        depth = rng.uniform(0.5, 4.0, size=(12, 16)).astype(np.float32)
        keep = rng.random((12, 16)) < 0.5
        cloud = back_project(DepthFrame(0, depth, k), Pose.identity(), BinaryMask(keep))
        assert len(cloud) == int(keep.sum())

    def test_invalid_pixels_skipped(self):
        k = small_intrinsics()
        depth = np.full((12, 16), np.nan, dtype=np.float32)
        depth[0, 0] = 2.0
        depth[0, 1] = 0.0
        cloud = back_project(DepthFrame(0, depth, k), Pose.identity())
        assert len(cloud) == 1


class TestPixelHits:
    def test_points_behind_camera_are_dropped(self):
        k = small_intrinsics()
        pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        rows, cols, z = pixel_hits(pts, Pose.identity(), k)
        assert len(z) == 1 and z[0] == 1.0

    def test_out_of_raster_dropped(self):
        k = small_intrinsics()
        pts = np.array([[10.0, 0.0, 1.0]])  # projects far right of the raster
        rows, cols, z = pixel_hits(pts, Pose.identity(), k)
        assert len(z) == 0


class TestFuse:
    def test_voxel_zero_concatenates(self, rng):
        clouds = [PointCloud(rng.normal(size=(10, 3))), PointCloud(rng.normal(size=(7, 3)))]
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        result = stitch(chunked(poses, plans, [Sim3.identity(), Sim3.identity()]), plans)
        fused = fuse(clouds, result, voxel_size=0.0)
        assert len(fused) == 17
        np.testing.assert_array_equal(np.unique(fused.chunk_ids), [1, 2])

    def test_duplicate_points_deduplicate(self, rng):
        clouds = [PointCloud(np.array([[0.51, 0.52, 0.53]])),
                  PointCloud(np.array([[0.51, 0.52, 0.53]]))]
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        result = stitch(chunked(poses, plans, [Sim3.identity(), Sim3.identity()]), plans)
        fused = fuse(clouds, result, voxel_size=0.1)
        assert len(fused) == 1
        assert fused.chunk_ids[0] == 1  # first chunk wins

    def test_chunk_count_mismatch(self, rng):
        plans = plan_chunks(30, 20, 5)
        poses = arc_poses(rng, 30)
        result = stitch(chunked(poses, plans, [Sim3.identity(), Sim3.identity()]), plans)
        with pytest.raises(ConsistencyError):
            fuse([PointCloud.empty()], result)


class TestVoxelDownsample:
    def test_first_point_wins(self):
        pts = np.array([[0.01, 0.0, 0.0], [0.02, 0.0, 0.0], [1.5, 0.0, 0.0]])
        keep = voxel_downsample(pts, 1.0)
        np.testing.assert_array_equal(keep, [0, 2])

    def test_negative_coordinates(self):
        pts = np.array([[-0.1, 0.0, 0.0], [0.1, 0.0, 0.0]])
        assert len(voxel_downsample(pts, 1.0)) == 2  # floor separates the two
