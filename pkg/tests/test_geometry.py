import numpy as np
import pytest

from cleanplate.errors import DataError, InsufficientSeedsError
from cleanplate.geometry import (
    Intrinsics,
    PointCloud,
    Pose,
    densify_depth,
    project_point,
    project_points,
    quat_to_rotation,
    rasterize,
    render_depth,
    rotation_from_euler_xyz,
    rotation_to_quat,
    unproject_pixel,
    unproject_pixels,
)

K = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)
IDENTITY = Pose.identity()


class TestProjection:
    def test_optical_axis_point_hits_principal_point(self):
        assert project_point(np.array([0.0, 0.0, 2.0]), IDENTITY, K) == (50.0, 50.0, 2.0)

    def test_offset_point(self):
        assert project_point(np.array([1.0, 0.0, 2.0]), IDENTITY, K) == (100.0, 50.0, 2.0)

    def test_behind_camera_signalled(self):
        assert project_point(np.array([0.0, 0.0, -1.0]), IDENTITY, K) is None

    def test_unproject_inverse(self):
        p = unproject_pixel(50.0, 50.0, 2.0, IDENTITY, K)
        np.testing.assert_allclose(p, [0.0, 0.0, 2.0], atol=1e-12)
        p = unproject_pixel(100.0, 50.0, 2.0, IDENTITY, K)
        np.testing.assert_allclose(p, [1.0, 0.0, 2.0], atol=1e-12)

    def test_unproject_rejects_nonpositive_depth(self):
        with pytest.raises(DataError):
            unproject_pixel(10.0, 10.0, 0.0, IDENTITY, K)

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        pose = Pose(rotation_from_euler_xyz(0.3, -0.2, 0.5), np.array([1.0, -2.0, 0.7]))
        u = rng.uniform(0, K.width - 1, 1000)
        v = rng.uniform(0, K.height - 1, 1000)
        d = rng.uniform(0.5, 50.0, 1000)
        world = unproject_pixels(u, v, d, pose, K)
        u2, v2, d2 = project_points(world, pose, K)
        assert np.abs(u2 - u).max() < 1e-6
        assert np.abs(v2 - v).max() < 1e-6
        assert np.abs(d2 - d).max() < 1e-6


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(DataError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(DataError):
            Pose(R, np.zeros(3))

    def test_compose_inverse(self):
        a = Pose(rotation_from_euler_xyz(0.1, 0.2, 0.3), np.array([1.0, 2.0, 3.0]))
        ident = a.compose(a.inverse())
        np.testing.assert_allclose(ident.R, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(ident.t, 0.0, atol=1e-12)

    def test_quat_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            R = rotation_from_euler_xyz(*rng.uniform(-np.pi, np.pi, 3))
            q = rotation_to_quat(R)
            np.testing.assert_allclose(quat_to_rotation(*q), R, atol=1e-12)


class TestRenderDepth:
    def test_zbuffer_keeps_nearest(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 5.0]]))
        depth = render_depth(cloud, IDENTITY, K)
        assert depth[50, 50] == 2.0

    def test_behind_camera_all_invalid(self):
        cloud = PointCloud(np.array([[0.0, 0.0, -2.0], [1.0, 1.0, -5.0]]))
        depth = render_depth(cloud, IDENTITY, K)
        assert (depth == 0).all()

    def test_empty_cloud_rejected(self):
        with pytest.raises(DataError):
            render_depth(PointCloud(np.zeros((0, 3))), IDENTITY, K)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        pts = np.column_stack([
            rng.uniform(-1, 1, 10000),
            rng.uniform(-1, 1, 10000),
            rng.uniform(0.5, 10.0, 10000),
        ])
        cloud = PointCloud(pts)
        depth = render_depth(cloud, IDENTITY, K)

        expected = np.zeros((K.height, K.width))
        for p in pts:
            u = K.fx * p[0] / p[2] + K.cx
            v = K.fy * p[1] / p[2] + K.cy
            ui = int(np.floor(u + 0.5))
            vi = int(np.floor(v + 0.5))
            if 0 <= ui < K.width and 0 <= vi < K.height:
                if expected[vi, ui] == 0 or p[2] < expected[vi, ui]:
                    expected[vi, ui] = p[2]
        np.testing.assert_array_equal(depth, expected)

    def test_rasterize_ties_round_half_up(self):
        ui, vi = rasterize(np.array([2.5, -0.5, 3.49]), np.array([1.5, 0.2, 7.51]))
        assert ui.tolist() == [3, 0, 3]
        assert vi.tolist() == [2, 0, 8]


class TestDensify:
    def test_constant_seeds(self):
        sparse = np.zeros((40, 40))
        rng = np.random.default_rng(2)
        rr = rng.integers(0, 40, 120)
        cc = rng.integers(0, 40, 120)
        sparse[rr, cc] = 4.0
        dense = densify_depth(sparse)
        inside = dense > 0
        assert inside.sum() >= 120
        np.testing.assert_allclose(dense[inside], 4.0)

    def test_planar_ramp_recovered(self):
        a, b, c = 0.01, 0.02, 2.0
        sparse = np.zeros((50, 60))
        rng = np.random.default_rng(4)
        rr = rng.integers(0, 50, 300)
        cc = rng.integers(0, 60, 300)
        sparse[rr, cc] = a * cc + b * rr + c
        gu, gv = np.meshgrid(np.arange(60.0), np.arange(50.0))
        truth = a * gu + b * gv + c
        # interpolation alone reconstructs the plane exactly
        interpolated = densify_depth(sparse, median_size=1)
        inside = interpolated > 0
        assert np.abs(interpolated[inside] - truth[inside]).max() < 1e-3
        # the median may substitute a neighbor's value at partial windows:
        # stay within the ramp's local variation over the window
        dense = densify_depth(sparse)
        local_variation = 2 * (a + b) + 1e-9
        assert np.abs(dense[dense > 0] - truth[dense > 0]).max() < local_variation

    def test_outlier_removed_by_median(self):
        # dense planar seeds (every pixel) with one spiked seed
        sparse = np.full((30, 30), 3.0)
        sparse[14, 14] = 50.0
        dense = densify_depth(sparse)
        assert abs(dense[14, 14] - 3.0) < 1e-3
        assert np.abs(dense - 3.0).max() < 1e-3

    def test_never_nonpositive_and_invalid_outside_hull(self):
        sparse = np.zeros((20, 20))
        sparse[5, 5] = sparse[5, 15] = sparse[15, 10] = 2.0
        dense = densify_depth(sparse)
        assert (dense >= 0).all()
        assert dense[0, 0] == 0.0  # outside the seed hull
        assert dense[8, 10] > 0  # inside the hull

    def test_too_few_seeds(self):
        sparse = np.zeros((10, 10))
        sparse[2, 2] = sparse[3, 3] = 1.0
        with pytest.raises(InsufficientSeedsError):
            densify_depth(sparse)

    def test_collinear_seeds(self):
        sparse = np.zeros((10, 10))
        sparse[5, 2:8] = 1.0
        with pytest.raises(InsufficientSeedsError):
            densify_depth(sparse)
