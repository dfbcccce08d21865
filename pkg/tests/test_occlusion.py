"""Occlusion score and local distance feature tests.

The oracle is a full N1 x N2 distance matrix, sorted, with breaches counted
under the same strict inequality. The implementation must agree exactly:
same distance formula, same selected multiset.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudclear import (
    EmptyCloudError,
    OcclusionParams,
    ee_branch_distances,
    mean_knn_distance,
    nearest_pair_distances,
    occlusion_heuristic,
    safety_breach,
)


def brute_pairs(a, b, k):
    """Full-matrix oracle: every cross distance, sorted ascending, first k."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1)).ravel()
    d.sort()
    return d[: min(k, d.size)]


def brute_h(a, b, k, d_th):
    d = brute_pairs(a, b, k)
    return int((d < d_th).sum()) / d.size


class TestNearestPairDistances:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_full_matrix_oracle_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n1, n2 = rng.integers(1, 65, size=2)
        a = rng.uniform(-1, 1, size=(n1, 3))
        b = rng.uniform(-1, 1, size=(n2, 3))
        k = int(rng.integers(1, 250))
        got = nearest_pair_distances(a, b, k)
        want = brute_pairs(a, b, k)
        assert got.effective_k == min(k, n1 * n2)
        assert np.array_equal(got.distances, want)

    def test_large_cloud_chunked_path_matches_oracle(self):
        # large enough that several scan blocks run
        rng = np.random.default_rng(42)
        a = rng.uniform(-1, 1, size=(700, 3))
        b = rng.uniform(-1, 1, size=(300, 3))
        got = nearest_pair_distances(a, b, 200)
        assert np.array_equal(got.distances, brute_pairs(a, b, 200))

    def test_fewer_pairs_than_k(self):
        a = np.zeros((2, 3))
        b = np.ones((3, 3))
        got = nearest_pair_distances(a, b, 200)
        assert got.effective_k == 6
        assert got.distances.shape == (6,)

    def test_sorted_ascending(self):
        rng = np.random.default_rng(1)
        got = nearest_pair_distances(rng.normal(size=(30, 3)), rng.normal(size=(30, 3)), 50)
        assert np.all(np.diff(got.distances) >= 0)

    def test_empty_cloud_raises(self):
        with pytest.raises(EmptyCloudError):
            nearest_pair_distances(np.empty((0, 3)), np.ones((3, 3)), 5)

    def test_bad_k_raises(self):
        with pytest.raises(ValueError):
            nearest_pair_distances(np.ones((2, 3)), np.ones((2, 3)), 0)


class TestOcclusionHeuristic:
    def test_all_pairs_breach_gives_one(self):
        a = np.zeros((4, 3))
        b = np.full((5, 3), 0.01)
        assert occlusion_heuristic(a, b, k=200, d_th=0.10) == 1.0

    def test_no_pair_breaches_gives_zero(self):
        a = np.zeros((4, 3))
        b = np.zeros((5, 3)) + np.array([1.0, 0, 0])
        assert occlusion_heuristic(a, b, k=200, d_th=0.10) == 0.0

    def test_strict_inequality_at_threshold(self):
        """A pair exactly at d_th does not breach; strictly inside does.

        Distances 0.125 and 0.0625 are exact in binary, so the boundary case
        carries no rounding ambiguity: with d_th = 0.125 and k = 2 only the
        0.0625 pair counts, h = 1/2.
        """
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[0.125, 0.0, 0.0], [0.0, 0.0625, 0.0]])
        assert occlusion_heuristic(a, b, k=2, d_th=0.125) == 0.5

    def test_half_breach_fraction(self):
        """One point at 0.05 (breach) and one at 0.5 (clear), k=2 -> h = 0.5."""
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[0.05, 0.0, 0.0], [0.5, 0.0, 0.0]])
        assert occlusion_heuristic(a, b, k=2, d_th=0.10) == 0.5

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(100 + seed)
        a = rng.uniform(0, 0.4, size=(int(rng.integers(1, 65)), 3))
        b = rng.uniform(0, 0.4, size=(int(rng.integers(1, 65)), 3))
        k = int(rng.integers(1, 250))
        assert occlusion_heuristic(a, b, k=k, d_th=0.10) == brute_h(a, b, k, 0.10)

    def test_separation_monotonicity(self):
        """Translating a cloud away along the line of centers never raises h.

        Clouds are built in disjoint balls so every pair distance is strictly
        increasing in the translation magnitude.
        """
        rng = np.random.default_rng(3)
        a = rng.normal(size=(40, 3)) * 0.02
        b = rng.normal(size=(40, 3)) * 0.02 + np.array([0.09, 0.0, 0.0])
        u = (b.mean(axis=0) - a.mean(axis=0))
        u = u / np.linalg.norm(u)
        hs = [occlusion_heuristic(a, b + t * u, k=200, d_th=0.10) for t in np.linspace(0, 0.3, 12)]
        assert all(h2 <= h1 + 1e-12 for h1, h2 in zip(hs, hs[1:]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_h_in_unit_interval_property(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-0.2, 0.2, size=(int(rng.integers(1, 33)), 3))
        b = rng.uniform(-0.2, 0.2, size=(int(rng.integers(1, 33)), 3))
        h = occlusion_heuristic(a, b, k=200, d_th=0.10)
        assert 0.0 <= h <= 1.0

    def test_bad_threshold_rejected(self):
        with pytest.raises(ValueError):
            occlusion_heuristic(np.ones((2, 3)), np.ones((2, 3)), k=5, d_th=0.0)


class TestLocalFeatures:
    def test_mean_knn_matches_oracle(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(15, 3))
        want = brute_pairs(a, b, 5).mean()
        assert mean_knn_distance(a, b, 5) == want

    def test_safety_breach_strict(self):
        """Mean distance exactly at d_sm is not a breach.

        Robot point at origin, clearance points all at distance 0.03125
        (exact in binary): mean = 0.03125, so d_sm = 0.03125 -> False and
        d_sm = 0.04 -> True.
        """
        robot = np.zeros((1, 3))
        clearance = np.array([[0.03125, 0, 0], [0, 0.03125, 0], [-0.03125, 0, 0],
                              [0, -0.03125, 0], [0, 0, 0.03125]])
        assert safety_breach(robot, clearance, k=5, d_sm=0.03125) is False
        assert safety_breach(robot, clearance, k=5, d_sm=0.04) is True

    def test_ee_distances_sorted_and_exact(self):
        """EE at origin, branch points on the x axis at 0.5, 0.25, 1.0, 0.125:
        the 5 nearest of 4 available are [0.125, 0.25, 0.5, 1.0] padded with
        the largest found, 1.0."""
        ee = np.zeros(3)
        branch = np.array([[0.5, 0, 0], [0.25, 0, 0], [1.0, 0, 0], [0.125, 0, 0]])
        got = ee_branch_distances(ee, branch, k=5)
        assert np.array_equal(got, np.array([0.125, 0.25, 0.5, 1.0, 1.0]))

    def test_ee_distances_full_width(self):
        rng = np.random.default_rng(5)
        got = ee_branch_distances(rng.normal(size=3), rng.normal(size=(50, 3)), k=5)
        assert got.shape == (5,)
        assert np.all(np.diff(got) >= 0)

    def test_padding_repeats_largest(self):
        got = ee_branch_distances(np.zeros(3), np.array([[0.25, 0, 0]]), k=5)
        assert np.array_equal(got, np.full(5, 0.25))


class TestOcclusionParams:
    def test_defaults(self):
        p = OcclusionParams()
        assert (p.k_pairs, p.d_th, p.k_local, p.d_sm) == (200, 0.10, 5, 0.04)
        assert p.heuristic_cloud == "zoomed_branch"

    def test_validation(self):
        with pytest.raises(ValueError):
            OcclusionParams(k_pairs=0)
        with pytest.raises(ValueError):
            OcclusionParams(d_th=-0.1)
        with pytest.raises(ValueError):
            OcclusionParams(heuristic_cloud="nope")
