"""Occlusion heuristic and local cross-cloud distance features.

The occlusion score h of two clouds is the breach fraction among the k
smallest cross-pair distances: h = |{d in k-nearest pairs : d < d_th}| / k,
with k truncated to the number of available pairs. h = 1 means every near
pair is inside the threshold; h = 0 means none is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clouds import as_points
from .errors import EmptyCloudError

# Working-set bound for the chunked scan; the full N1*N2 distance matrix is
# never materialized beyond this many entries at a time.
_SCAN_BLOCK_ELEMS = 16384


@dataclass(frozen=True)
class OcclusionParams:
    """Thresholds for the occlusion score and the local safety features.

    d_th is the clearance-cylinder diameter (0.10 m for a 0.05 m radius);
    d_sm is the safety margin on the mean of the k_local nearest
    robot-to-clearance distances. heuristic_cloud selects which branch cloud
    feeds h: the zoomed crop by default, or the whole-branch cloud.
    """

    k_pairs: int = 200
    d_th: float = 0.10
    k_local: int = 5
    d_sm: float = 0.04
    heuristic_cloud: str = "zoomed_branch"

    def __post_init__(self):
        if self.k_pairs < 1:
            raise ValueError(f"k_pairs must be >= 1, got {self.k_pairs}")
        if self.k_local < 1:
            raise ValueError(f"k_local must be >= 1, got {self.k_local}")
        if self.d_th <= 0 or self.d_sm <= 0:
            raise ValueError("distance thresholds must be positive")
        if self.heuristic_cloud not in ("zoomed_branch", "whole_branch"):
            raise ValueError(f"heuristic_cloud must be zoomed_branch or whole_branch, got {self.heuristic_cloud!r}")


@dataclass(frozen=True)
class NearestPairSet:
    """The k smallest cross-pair distances, sorted ascending."""

    distances: np.ndarray
    effective_k: int

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.distances, dtype=np.float64))
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)


def _pair_distance_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # sqrt(sum((a_i - b_j)^2)): kept as the literal formula so results match
    # brute-force recomputation bit for bit
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1)).ravel()


def nearest_pair_distances(cloud1, cloud2, k: int) -> NearestPairSet:
    """k smallest Euclidean distances across two clouds, ascending.

    Scans cloud1 in blocks, keeping a bounded carry of the k best so far;
    memory stays O(block + k) rather than O(N1*N2).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    a = as_points(cloud1)
    b = as_points(cloud2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyCloudError("nearest_pair_distances requires two non-empty clouds")
    total = a.shape[0] * b.shape[0]
    eff_k = min(k, total)
    rows_per_block = max(1, _SCAN_BLOCK_ELEMS // b.shape[0])
    carry = np.empty(0, dtype=np.float64)
    for start in range(0, a.shape[0], rows_per_block):
        block = _pair_distance_block(a[start:start + rows_per_block], b)
        merged = np.concatenate([carry, block])
        if merged.size > eff_k:
            merged = np.partition(merged, eff_k - 1)[:eff_k]
        carry = merged
    carry.sort()
    return NearestPairSet(distances=carry, effective_k=eff_k)


def occlusion_heuristic(cloud1, cloud2, k: int = 200, d_th: float = 0.10) -> float:
    """Breach fraction among the k nearest cross pairs; strict d < d_th."""
    if d_th <= 0:
        raise ValueError(f"d_th must be positive, got {d_th}")
    pairs = nearest_pair_distances(cloud1, cloud2, k)
    breaches = int((pairs.distances < d_th).sum())
    return breaches / pairs.effective_k


def mean_knn_distance(cloud1, cloud2, k: int) -> float:
    """Mean of the k smallest cross-pair distances (k truncated to available pairs)."""
    pairs = nearest_pair_distances(cloud1, cloud2, k)
    return float(pairs.distances.mean())


def safety_breach(robot_cloud, clearance_cloud, k: int = 5, d_sm: float = 0.04) -> bool:
    """True when the mean of the k nearest robot-to-clearance distances is under d_sm."""
    if d_sm <= 0:
        raise ValueError(f"d_sm must be positive, got {d_sm}")
    return mean_knn_distance(robot_cloud, clearance_cloud, k) < d_sm


def ee_branch_distances(ee_point, branch_cloud, k: int = 5) -> np.ndarray:
    """k smallest end-effector-to-branch distances, ascending.

    When the branch cloud offers fewer than k points the result is padded by
    repeating the largest distance found, keeping the feature width fixed.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ee = np.asarray(ee_point, dtype=np.float64).reshape(1, 3)
    if not np.isfinite(ee).all():
        raise ValueError("ee_point must be finite")
    pairs = nearest_pair_distances(ee, branch_cloud, k)
    d = pairs.distances
    if d.size < k:
        d = np.concatenate([d, np.full(k - d.size, d[-1])])
    return d
