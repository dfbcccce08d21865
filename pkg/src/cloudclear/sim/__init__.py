"""Batched rigid-arm / deformable-tree simulation with a static clearance line."""

from .arm import ArmModel, ArmPose
from .capsule import (
    capsule_penetration,
    capsule_surface_area,
    point_segment_distance,
    sample_capsule_set_surface,
    segment_closest_points,
)
from .lsystem import LSystemParams, TreeModel, generate_tree
from .scenario import ScenarioConfig, make_batch, randomize_scenario
from .world import (
    CLOUD_SELECTORS,
    ContactReport,
    World,
    WorldParams,
    add_cloud_noise,
    ssed_update,
    touch_indicator,
)

__all__ = [
    "ArmModel",
    "ArmPose",
    "CLOUD_SELECTORS",
    "ContactReport",
    "LSystemParams",
    "ScenarioConfig",
    "TreeModel",
    "World",
    "WorldParams",
    "add_cloud_noise",
    "capsule_penetration",
    "capsule_surface_area",
    "generate_tree",
    "make_batch",
    "point_segment_distance",
    "randomize_scenario",
    "sample_capsule_set_surface",
    "segment_closest_points",
    "ssed_update",
    "touch_indicator",
]
