"""Segment/capsule geometry against a dense-sampling oracle and hand cases."""

import numpy as np
import pytest

from cloudclear.sim.capsule import (
    capsule_penetration,
    capsule_surface_area,
    point_segment_distance,
    sample_capsule_set_surface,
    segment_closest_points,
)


def brute_segment_distance(p1, q1, p2, q2, m=400):
    """Dense parameter grid oracle; accurate to O(len/m)."""
    t = np.linspace(0, 1, m)
    a = p1[None] + t[:, None] * (q1 - p1)[None]
    b = p2[None] + t[:, None] * (q2 - p2)[None]
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return d.min()


class TestSegmentClosestPoints:
    def test_perpendicular_crossing_gap(self):
        """Segments along x and y, offset by 0.3 in z: distance is exactly 0.3."""
        _, _, d = segment_closest_points(
            np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]),
            np.array([0, -1.0, 0.3]), np.array([0, 1.0, 0.3]),
        )
        assert d == pytest.approx(0.3, abs=1e-12)

    def test_parallel_segments(self):
        _, _, d = segment_closest_points(
            np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
            np.array([0.0, 0.5, 0]), np.array([1.0, 0.5, 0]),
        )
        assert d == pytest.approx(0.5, abs=1e-12)

    def test_endpoint_to_endpoint(self):
        """Disjoint collinear segments: closest points are facing endpoints."""
        c1, c2, d = segment_closest_points(
            np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
            np.array([2.0, 0, 0]), np.array([3.0, 0, 0]),
        )
        assert d == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(c1, [1, 0, 0], atol=1e-12)
        assert np.allclose(c2, [2, 0, 0], atol=1e-12)

    def test_degenerate_point_segment(self):
        _, _, d = segment_closest_points(
            np.array([0.0, 0, 0]), np.array([0.0, 0, 0]),
            np.array([1.0, -1, 0]), np.array([1.0, 1, 0]),
        )
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_both_degenerate(self):
        _, _, d = segment_closest_points(
            np.zeros(3), np.zeros(3), np.ones(3), np.ones(3))
        assert d == pytest.approx(np.sqrt(3.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p1, q1, p2, q2 = rng.uniform(-1, 1, size=(4, 3))
        _, _, d = segment_closest_points(p1, q1, p2, q2)
        want = brute_segment_distance(p1, q1, p2, q2)
        assert d <= want + 1e-9
        assert d >= want - 0.01  # oracle grid resolution

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(99)
        segs = rng.uniform(-1, 1, size=(50, 4, 3))
        _, _, d_batch = segment_closest_points(segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3])
        for i in range(50):
            _, _, d = segment_closest_points(*segs[i])
            assert d == d_batch[i]

    def test_closest_points_lie_on_segments(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p1, q1, p2, q2 = rng.uniform(-1, 1, size=(4, 3))
            c1, c2, d = segment_closest_points(p1, q1, p2, q2)
            assert point_segment_distance(c1, p1, q1) <= 1e-9
            assert point_segment_distance(c2, p2, q2) <= 1e-9
            assert d == pytest.approx(np.linalg.norm(c1 - c2), abs=1e-12)


class TestPointSegmentDistance:
    def test_interior_projection(self):
        d = point_segment_distance(np.array([0.5, 2.0, 0]), np.zeros(3), np.array([1.0, 0, 0]))
        assert d == pytest.approx(2.0, abs=1e-12)

    def test_beyond_endpoint(self):
        d = point_segment_distance(np.array([2.0, 0, 0]), np.zeros(3), np.array([1.0, 0, 0]))
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_segment(self):
        d = point_segment_distance(np.array([0.0, 3.0, 4.0]), np.ones(3) * 0, np.zeros(3))
        assert d == pytest.approx(5.0, abs=1e-12)


class TestCapsulePenetration:
    def test_overlapping_capsules_depth_and_normal(self):
        """Parallel axes 0.05 apart, radii 0.04 each: depth = 0.03, normal +y."""
        depth, normal, _ = capsule_penetration(
            np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), 0.04,
            np.array([0.0, -0.05, 0]), np.array([1.0, -0.05, 0]), 0.04,
        )
        assert depth == pytest.approx(0.03, abs=1e-12)
        assert np.allclose(normal, [0, 1, 0], atol=1e-12)

    def test_separated_capsules_negative_depth(self):
        depth, _, _ = capsule_penetration(
            np.zeros(3), np.array([1.0, 0, 0]), 0.02,
            np.array([0.0, 1.0, 0]), np.array([1.0, 1.0, 0]), 0.02,
        )
        assert depth == pytest.approx(-0.96, abs=1e-12)

    def test_coincident_axes_fallback_normal(self):
        depth, normal, _ = capsule_penetration(
            np.zeros(3), np.array([1.0, 0, 0]), 0.05,
            np.zeros(3), np.array([1.0, 0, 0]), 0.05,
        )
        assert depth == pytest.approx(0.10, abs=1e-12)
        assert np.allclose(normal, [0, 0, 1])


class TestSurfaceSampling:
    @staticmethod
    def _single_capsule(lateral_only=False, n=4000, seed=0, length=1.0, radius=0.1):
        rng = np.random.default_rng(seed)
        return sample_capsule_set_surface(
            starts=np.zeros((1, 3)),
            directions=np.eye(3)[None],
            lengths=np.array([length]),
            radii=np.array([radius]),
            n=n, rng=rng, lateral_only=lateral_only,
        )

    def test_points_on_surface(self):
        pts = self._single_capsule()
        d = point_segment_distance(pts, np.zeros(3), np.array([0, 0, 1.0]))
        assert np.allclose(d, 0.1, atol=1e-9)

    def test_lateral_only_mean_on_axis(self):
        """Unit cylinder: sample mean sits on the axis within 3 standard errors.

        Radial coordinates have std 0.1/sqrt(2) per axis and z has std
        1/sqrt(12), so with n = 10000 the tolerances are 3 * std / sqrt(n).
        """
        n = 10000
        pts = self._single_capsule(lateral_only=True, n=n)
        mean = pts.mean(axis=0)
        tol_xy = 3 * (0.1 / np.sqrt(2)) / np.sqrt(n)
        tol_z = 3 * (1.0 / np.sqrt(12)) / np.sqrt(n)
        assert abs(mean[0]) <= tol_xy
        assert abs(mean[1]) <= tol_xy
        assert abs(mean[2] - 0.5) <= tol_z

    def test_rigid_transform_equivariance(self):
        """Same seed under a rigidly moved body gives rigidly moved samples."""
        from scipy.spatial.transform import Rotation

        R = Rotation.from_rotvec([0.3, -0.2, 0.9]).as_matrix()
        t = np.array([1.0, -2.0, 0.5])
        a = self._single_capsule(seed=5)
        rng = np.random.default_rng(5)
        b = sample_capsule_set_surface(
            starts=t[None], directions=(R @ np.eye(3))[None],
            lengths=np.array([1.0]), radii=np.array([0.1]),
            n=4000, rng=rng,
        )
        assert np.abs(b - (a @ R.T + t)).max() <= 1e-12

    def test_area_proportional_allocation(self):
        """Two capsules with 4:1 surface area split samples roughly 4:1."""
        rng = np.random.default_rng(3)
        starts = np.array([[0.0, 0, 0], [5.0, 0, 0]])
        dirs = np.stack([np.eye(3), np.eye(3)])
        # area scales ~linearly with radius at fixed length
        pts = sample_capsule_set_surface(
            starts, dirs, lengths=np.array([1.0, 1.0]),
            radii=np.array([0.4, 0.1]), n=20000, rng=rng, lateral_only=True)
        near_second = (np.abs(pts[:, 0] - 5.0) < 1.0).mean()
        assert 0.15 <= near_second <= 0.25

    def test_deterministic_given_rng_seed(self):
        a = self._single_capsule(seed=11)
        b = self._single_capsule(seed=11)
        assert np.array_equal(a, b)

    def test_surface_area_formula(self):
        assert capsule_surface_area(1.0, 0.1) == pytest.approx(
            2 * np.pi * 0.1 + 4 * np.pi * 0.01, abs=1e-12)
