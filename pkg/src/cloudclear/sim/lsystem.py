"""L-system style branch cluster generation.

A tree is expanded breadth-first from a trunk: every link at depth d < D
spawns `branching_factor` children tilted by the divergence angle at evenly
spread azimuths, with lengths scaled by the elongation rate and radii by the
taper. Link count is therefore sum_{d=0..D} branching_factor^d regardless of
the morphology perturbation, which jitters continuous parameters only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

_INERTIA_FLOOR = 1e-5


@dataclass(frozen=True)
class LSystemParams:
    """Tree morphology and joint-dynamics parameters.

    morphology_ sigma scales the per-tree multiplicative Gaussian jitter on
    the continuous parameters and the per-node azimuth/divergence jitter;
    zero gives a fully deterministic symmetric tree. joint_stiffness and
    joint_damping are base values for a trunk-radius link; joints scale both
    by (radius / base_radius)^2 so thin twigs are softer. Neither value comes
    from measured wood: they are tuned for stable, visibly compliant motion
    at dt = 1/60.
    """

    recursion_depth: int = 3
    branching_factor: int = 3
    divergence_angle: float = 0.5
    elongation_rate: float = 0.8
    base_segment_length: float = 0.25
    base_radius: float = 0.02
    radius_taper: float = 0.7
    morphology_sigma: float = 0.1
    density: float = 700.0
    joint_stiffness: float = 1.0
    joint_damping: float = 0.35

    def __post_init__(self):
        if self.recursion_depth < 1:
            raise ValueError(f"recursion_depth must be >= 1, got {self.recursion_depth}")
        if self.branching_factor < 1:
            raise ValueError(f"branching_factor must be >= 1, got {self.branching_factor}")
        for name in ("elongation_rate", "base_segment_length", "base_radius",
                     "radius_taper", "density", "joint_stiffness", "joint_damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.morphology_sigma < 0:
            raise ValueError("morphology_sigma must be >= 0")


@dataclass(frozen=True)
class TreeModel:
    """Immutable tree description in the tree's own frame (trunk base at origin).

    parent[i] is -1 for the trunk; rest_rotation_local[i] orients link i's
    frame (z along the segment) within its parent frame (trunk: within the
    tree frame). Joints are implicit, one per link including the root anchor:
    joint i connects link i to its parent with the given stiffness/damping.
    """

    parent: np.ndarray            # (L,) int
    depth: np.ndarray             # (L,) int
    rest_rotation_local: np.ndarray  # (L, 3, 3)
    length: np.ndarray            # (L,)
    radius: np.ndarray            # (L,)
    mass: np.ndarray              # (L,)
    stiffness: np.ndarray         # (L,)
    damping: np.ndarray           # (L,)
    inertia: np.ndarray           # (L,) subtree inertia about the joint, at rest
    ancestors: np.ndarray         # (L, L) bool; ancestors[a, l] = a is ancestor-or-self of l

    @property
    def num_links(self) -> int:
        return self.parent.shape[0]

    @property
    def num_joints(self) -> int:
        # one joint per link: the trunk's is the root anchor
        return self.parent.shape[0]

    def rest_world_frames(self):
        """Rest-pose rotations and joint/tip positions in the tree frame."""
        L = self.num_links
        rot = np.empty((L, 3, 3))
        start = np.empty((L, 3))
        tip = np.empty((L, 3))
        for i in range(L):
            p = self.parent[i]
            if p < 0:
                rot[i] = self.rest_rotation_local[i]
                start[i] = 0.0
            else:
                rot[i] = rot[p] @ self.rest_rotation_local[i]
                start[i] = tip[p]
            tip[i] = start[i] + rot[i][:, 2] * self.length[i]
        return rot, start, tip


def _perturb_params(params: LSystemParams, rng: np.random.Generator) -> LSystemParams:
    """Multiplicative Gaussian jitter on the continuous morphology parameters."""
    if params.morphology_sigma == 0.0:
        return params
    sigma = params.morphology_sigma

    def jitter(value, lo=None, hi=None):
        v = value * (1.0 + sigma * rng.standard_normal())
        v = max(v, 0.1 * value)
        if hi is not None:
            v = min(v, hi)
        return v

    return replace(
        params,
        divergence_angle=jitter(params.divergence_angle, hi=1.4),
        elongation_rate=jitter(params.elongation_rate, hi=1.5),
        base_segment_length=jitter(params.base_segment_length),
        base_radius=jitter(params.base_radius),
        radius_taper=jitter(params.radius_taper, hi=0.95),
    )


def generate_tree(params: LSystemParams, seed: int = 0) -> TreeModel:
    """Expand a tree deterministically from (params, seed).

    The same inputs always produce bit-identical arrays; the perturbation
    touches geometry only, never topology.
    """
    rng = np.random.default_rng(seed)
    p = _perturb_params(params, rng)
    sigma = params.morphology_sigma

    parents = [-1]
    depths = [0]
    rots = [np.eye(3)]
    lengths = [p.base_segment_length]
    radii = [p.base_radius]

    frontier = [0]
    for d in range(1, p.recursion_depth + 1):
        next_frontier = []
        for node in frontier:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            for j in range(p.branching_factor):
                az = phase + 2.0 * np.pi * j / p.branching_factor
                div = p.divergence_angle * (1.0 + sigma * rng.standard_normal())
                div = float(np.clip(div, 0.05, 1.45))
                rot = (Rotation.from_euler("z", az) * Rotation.from_euler("y", div)).as_matrix()
                parents.append(node)
                depths.append(d)
                rots.append(rot)
                lengths.append(lengths[node] * p.elongation_rate)
                radii.append(radii[node] * p.radius_taper)
                next_frontier.append(len(parents) - 1)
        frontier = next_frontier

    parent = np.asarray(parents, dtype=np.int64)
    depth = np.asarray(depths, dtype=np.int64)
    length = np.asarray(lengths)
    radius = np.asarray(radii)
    mass = p.density * np.pi * radius**2 * length

    rel = (radius / p.base_radius) ** 2
    stiffness = p.joint_stiffness * rel
    damping = p.joint_damping * rel

    L = parent.shape[0]
    ancestors = np.zeros((L, L), dtype=bool)
    for i in range(L):
        a = i
        while a >= 0:
            ancestors[a, i] = True
            a = parent[a]

    # subtree rotational inertia about each joint, evaluated at rest
    rot, start, tip = TreeModel(
        parent, depth, np.stack(rots), length, radius, mass,
        stiffness, damping, np.ones(L), ancestors,
    ).rest_world_frames()
    center = 0.5 * (start + tip)
    inertia = np.empty(L)
    for i in range(L):
        members = np.nonzero(ancestors[i])[0]
        d2 = ((center[members] - start[i]) ** 2).sum(axis=1)
        inertia[i] = (mass[members] * (d2 + length[members] ** 2 / 12.0)).sum()
    inertia = np.maximum(inertia, _INERTIA_FLOOR)

    return TreeModel(
        parent=parent,
        depth=depth,
        rest_rotation_local=np.stack(rots),
        length=length,
        radius=radius,
        mass=mass,
        stiffness=stiffness,
        damping=damping,
        inertia=inertia,
        ancestors=ancestors,
    )
