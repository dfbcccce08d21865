"""Segment and capsule geometry, batched over leading axes.

All functions accept arrays whose last axis is 3 and broadcast over any
leading batch shape. Distances follow the closest-point-between-segments
construction with clamped parameters, covering degenerate (point-like)
segments.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def segment_closest_points(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2].

    Returns (c1, c2, dist) where c1/c2 lie on the respective segments.
    Batched: inputs broadcast over leading axes.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = (d1 * d1).sum(-1)
    e = (d2 * d2).sum(-1)
    f = (d2 * r).sum(-1)
    c = (d1 * r).sum(-1)
    b = (d1 * d2).sum(-1)

    deg1 = a <= _EPS
    deg2 = e <= _EPS
    safe_a = np.where(deg1, 1.0, a)
    safe_e = np.where(deg2, 1.0, e)

    denom = a * e - b * b
    safe_denom = np.where(denom > _EPS, denom, 1.0)
    s_general = np.clip((b * f - c * e) / safe_denom, 0.0, 1.0)
    # parallel segments: pick s = 0, let t handle separation
    s = np.where(denom > _EPS, s_general, 0.0)

    t = (b * s + f) / safe_e
    # clamp t, then recompute s for the clamped endpoint
    t_low = t < 0.0
    t_high = t > 1.0
    s = np.where(t_low, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t_high, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)

    # degenerate overrides
    s = np.where(deg1, 0.0, s)
    t = np.where(deg1, np.clip(f / safe_e, 0.0, 1.0), t)
    t = np.where(deg2, 0.0, t)
    s = np.where(deg2 & ~deg1, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(deg1 & deg2, 0.0, s)
    t = np.where(deg1 & deg2, 0.0, t)

    c1 = p1 + s[..., None] * d1
    c2 = p2 + t[..., None] * d2
    diff = c1 - c2
    dist = np.sqrt((diff * diff).sum(-1))
    return c1, c2, dist


def point_segment_distance(x, a, b):
    """Distance from points x to segments [a, b]; broadcasts over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    dd = (d * d).sum(-1)
    safe = np.where(dd <= _EPS, 1.0, dd)
    t = np.clip(((x - a) * d).sum(-1) / safe, 0.0, 1.0)
    t = np.where(dd <= _EPS, 0.0, t)
    closest = a + t[..., None] * d
    diff = x - closest
    return np.sqrt((diff * diff).sum(-1))


def capsule_penetration(p1, q1, r1, p2, q2, r2):
    """Penetration depth and contact frame between two capsules.

    Returns (depth, normal, point) where depth = r1 + r2 - dist (positive
    when overlapping), normal points from capsule 2 toward capsule 1, and
    point is the midpoint of the closest-approach segment. When the core
    segments coincide the normal falls back to +z.
    """
    c1, c2, dist = segment_closest_points(p1, q1, p2, q2)
    depth = r1 + r2 - dist
    safe = np.where(dist <= _EPS, 1.0, dist)
    normal = (c1 - c2) / safe[..., None]
    fallback = np.zeros_like(normal)
    fallback[..., 2] = 1.0
    normal = np.where((dist <= _EPS)[..., None], fallback, normal)
    point = 0.5 * (c1 + c2)
    return depth, normal, point


def capsule_surface_area(length, radius):
    """Lateral plus spherical-cap area of a capsule."""
    length = np.asarray(length, dtype=np.float64)
    radius = np.asarray(radius, dtype=np.float64)
    return 2.0 * np.pi * radius * length + 4.0 * np.pi * radius * radius


def sample_capsule_set_surface(starts, directions, lengths, radii, n, rng,
                               lateral_only: bool = False):
    """Uniform surface samples over a set of capsules.

    starts (L,3): segment start points; directions (L,3,3): rotation matrices
    whose third column is the segment axis; lengths/radii (L,). Points are
    allocated to capsules proportionally to surface area, sampled in each
    local frame, then rigidly transformed, so the same rng state under a
    rigidly transformed body yields rigidly transformed samples.
    """
    lengths = np.asarray(lengths, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    lat_area = 2.0 * np.pi * radii * lengths
    cap_area = np.zeros_like(lat_area) if lateral_only else 4.0 * np.pi * radii * radii
    total = lat_area + cap_area
    probs = total / total.sum()
    idx = rng.choice(len(lengths), size=n, p=probs)
    r = radii[idx]
    ln = lengths[idx]
    p_lat = lat_area[idx] / total[idx]

    u_part = rng.random(n)
    z = rng.random(n) * ln
    phi = rng.random(n) * (2.0 * np.pi)
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    top = rng.random(n) < 0.5

    local = np.empty((n, 3))
    lateral = u_part < p_lat
    local[:, 0] = r * np.cos(phi)
    local[:, 1] = r * np.sin(phi)
    local[:, 2] = z
    # cap points: hemisphere attached at each end
    cap_z = np.where(top, np.abs(dirs[:, 2]), -np.abs(dirs[:, 2]))
    cap = np.stack([r * dirs[:, 0], r * dirs[:, 1], r * cap_z + np.where(top, ln, 0.0)], axis=1)
    local = np.where(lateral[:, None], local, cap)

    rot = np.asarray(directions, dtype=np.float64)[idx]
    world = np.einsum("nij,nj->ni", rot, local) + np.asarray(starts, dtype=np.float64)[idx]
    return world
