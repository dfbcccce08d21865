"""Point cloud container and validation helpers.

All clouds are (N, 3) float64 arrays of world-frame coordinates in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tags name the role a cloud plays in the observation pipeline. "generic" is
# the only tag allowed to be empty.
CLOUD_TAGS = ("robot", "clearance", "whole_branch", "zoomed_branch", "generic")


def as_points(data, *, allow_empty: bool = True) -> np.ndarray:
    """Coerce array-like or PointCloud input to a validated (N, 3) float64 array."""
    if isinstance(data, PointCloud):
        return data.points
    pts = np.asarray(data, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {pts.shape}")
    if not allow_empty and pts.shape[0] == 0:
        raise ValueError("point array must be non-empty")
    if pts.size and not np.isfinite(pts).all():
        raise ValueError("point array contains non-finite coordinates")
    return np.ascontiguousarray(pts)


@dataclass(frozen=True)
class PointCloud:
    """An (N, 3) float64 cloud with a role tag.

    Empty clouds are permitted only under the "generic" tag; the sampled
    sensor channels must always carry at least one point.
    """

    points: np.ndarray
    tag: str = "generic"

    def __post_init__(self):
        pts = as_points(self.points)
        if self.tag not in CLOUD_TAGS:
            raise ValueError(f"unknown cloud tag {self.tag!r}; expected one of {CLOUD_TAGS}")
        if pts.shape[0] == 0 and self.tag != "generic":
            raise ValueError(f"empty cloud not allowed for tag {self.tag!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def translated(self, offset) -> "PointCloud":
        off = np.asarray(offset, dtype=np.float64).reshape(3)
        return PointCloud(self.points + off, self.tag)
