"""Scenario randomization: trees, dynamics scales, and line placement.

Each scenario draws a perturbed tree with a uniform trunk yaw, scales the
joint dynamics and friction, and places the clearance cylinder near a branch
so the initial occlusion score clears h_min; placements failing the reach or
occlusion constraints are rejected and retried within a budget. Enforcing
h >= h_min per scenario guarantees any batch also meets the batch-mean bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ScenarioError
from ..occlusion import OcclusionParams, occlusion_heuristic
from .arm import ArmModel
from .lsystem import LSystemParams, generate_tree
from .world import World, WorldParams


def _frame_with_z(axis: np.ndarray) -> np.ndarray:
    """Deterministic right-handed frame whose third column is the given axis."""
    z = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    return (v * np.cos(angle) + np.cross(axis, v) * np.sin(angle)
            + axis * (axis @ v) * (1.0 - np.cos(angle)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything randomize_scenario needs; all ranges are uniform.

    The initial-h check samples the same cloud the observation pipeline uses
    for the occlusion score (occlusion.heuristic_cloud) at the sizes below.
    Ranges for the dynamics scales are invented desk-scale values: wide
    enough to matter, narrow enough to stay stable at dt = 1/60.
    """

    tree: LSystemParams = field(default_factory=LSystemParams)
    arm: ArmModel = field(default_factory=ArmModel)
    world: WorldParams = field(default_factory=WorldParams)
    occlusion: OcclusionParams = field(default_factory=OcclusionParams)
    line_length: float = 0.5
    line_radius: float = 0.05
    axis_cone_deg: float = 15.0
    anchor_offset_sigma: float = 0.01
    reach_min: float = 0.25
    reach_max: float = 0.95
    h_min: float = 0.7
    rejection_budget: int = 200
    stiffness_scale_range: tuple = (0.7, 1.3)
    damping_scale_range: tuple = (0.7, 1.3)
    friction_scale_range: tuple = (0.7, 1.3)
    arm_q_jitter: float = 0.0
    n_zoomed: int = 256
    n_whole_branch: int = 512
    n_clearance: int = 64
    n_robot: int = 128

    def __post_init__(self):
        if not 0.0 <= self.h_min <= 1.0:
            raise ValueError(f"h_min must be in [0, 1], got {self.h_min}")
        if self.rejection_budget < 1:
            raise ValueError("rejection_budget must be >= 1")
        if not 0.0 <= self.axis_cone_deg <= 90.0:
            raise ValueError("axis_cone_deg must be in [0, 90]")
        if self.line_length <= 0 or self.line_radius <= 0:
            raise ValueError("line dimensions must be positive")
        if not 0 < self.reach_min < self.reach_max:
            raise ValueError("need 0 < reach_min < reach_max")
        for name in ("stiffness_scale_range", "damping_scale_range", "friction_scale_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high")


def randomize_scenario(config: ScenarioConfig, seed) -> World:
    """Build one randomized environment (E = 1 World).

    Deterministic in (config, seed). Raises ScenarioError naming the failed
    constraint if the rejection budget runs out.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tree_ss, place_ss, runtime_ss = root.spawn(3)
    place_rng = np.random.default_rng(place_ss)

    tree = generate_tree(config.tree, tree_ss)
    yaw = place_rng.uniform(0.0, 2.0 * np.pi)
    cy, sy = np.cos(yaw), np.sin(yaw)
    base_rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    base_pos = np.zeros(3)

    ks = place_rng.uniform(*config.stiffness_scale_range)
    cs = place_rng.uniform(*config.damping_scale_range)
    fs = place_rng.uniform(*config.friction_scale_range)

    q0 = config.arm.home_q.copy()
    if config.arm_q_jitter > 0:
        q0 = config.arm.clamp_q(q0 + place_rng.normal(0.0, config.arm_q_jitter, size=6))

    world = World(
        trees=[tree], arm=config.arm, params=config.world,
        base_positions=base_pos[None], base_rotations=base_rot[None],
        line_starts=np.zeros((1, 3)), line_rotations=np.eye(3)[None],
        line_lengths=np.array([config.line_length]),
        line_radii=np.array([config.line_radius]),
        rngs=[place_rng],  # placement draws; swapped for the runtime stream on accept
        stiffness_scales=np.array([ks]), damping_scales=np.array([cs]),
        friction_scales=np.array([fs]), initial_q=q0[None],
    )

    _, _, joint_pos, tip = world.tree_frames()
    joint_pos, tip = joint_pos[0], tip[0]
    max_depth = int(tree.depth.max())
    candidates = np.nonzero(tree.depth >= min(1, max_depth))[0]

    axis0 = config.arm.base_position - base_pos
    axis0 = axis0 / np.linalg.norm(axis0)
    cone = np.deg2rad(config.axis_cone_deg)

    last_fail = "h_min"
    for _ in range(config.rejection_budget):
        link = int(place_rng.choice(candidates))
        s = place_rng.uniform(0.2, 0.8)
        anchor = joint_pos[link] + s * (tip[link] - joint_pos[link])
        anchor = anchor + place_rng.normal(0.0, config.anchor_offset_sigma, size=3)

        # direction within the cone around the trunk-to-base axis
        frame = _frame_with_z(axis0)
        psi = place_rng.uniform(0.0, 2.0 * np.pi)
        perp = frame[:, 0] * np.cos(psi) + frame[:, 1] * np.sin(psi)
        u = _rotate_about(axis0, perp, place_rng.uniform(0.0, cone))

        center = anchor
        reach = np.linalg.norm(center - config.arm.base_position)
        if not config.reach_min <= reach <= config.reach_max:
            last_fail = "gripper_reach"
            continue

        world.line_start[0] = center - 0.5 * config.line_length * u
        world.line_rot[0] = _frame_with_z(u)
        world._geom_cache = None

        h = _initial_h(world, config)
        if h >= config.h_min:
            world.rngs = [np.random.default_rng(runtime_ss)]
            world.scenario_h = np.array([h])  # accepted initial occlusion score
            return world
        last_fail = "h_min"

    raise ScenarioError(
        f"scenario rejection budget exhausted after {config.rejection_budget} tries; "
        f"last failed constraint: {last_fail}")


def _initial_h(world: World, config: ScenarioConfig) -> float:
    occ = config.occlusion
    if occ.heuristic_cloud == "zoomed_branch":
        branch = world.sample_cloud("zoomed_branch", config.n_zoomed, env=0)
    else:
        branch = world.sample_cloud("whole_branch", config.n_whole_branch, env=0)
    if branch.shape[0] == 0:
        return 0.0
    clearance = world.sample_cloud("clearance", config.n_clearance, env=0)
    return occlusion_heuristic(branch, clearance, k=occ.k_pairs, d_th=occ.d_th)


def make_batch(config: ScenarioConfig, seed, count: int) -> World:
    """count independent scenarios stacked into one batched World.

    Environment i's stream depends only on (seed, i), never on count, so a
    batch is state-identical to the same environments built one at a time.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(count)
    worlds = [randomize_scenario(config, ss) for ss in children]
    if count == 1:
        return worlds[0]
    batch = World.concat(worlds)
    batch.scenario_h = np.concatenate([w.scenario_h for w in worlds])
    return batch
