"""Six-joint revolute arm with capsule links, driven by clamped joint velocities.

Geometry is a generic desk-scale chain (reach just over 1 m), not any
specific robot. Frames compose as T_i = T_{i-1} * Trans(offset_i) *
Rot(axis_i, q_i); capsule i spans consecutive joint origins, with a final
capsule from joint 6 to the end-effector frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

_AXES = {"x": 0, "y": 1, "z": 2}


def _axis_rotations(axis: str, angles: np.ndarray) -> np.ndarray:
    """(E,) angles -> (E, 3, 3) rotations about a principal axis."""
    return Rotation.from_euler(axis, angles).as_matrix().reshape(-1, 3, 3)


@dataclass(frozen=True)
class ArmPose:
    """World-frame forward kinematics result for a batch of configurations."""

    joint_positions: np.ndarray   # (E, 7, 3): joints 1..6 then the EE point
    joint_rotations: np.ndarray   # (E, 6, 3, 3) frame after each joint
    joint_axes_world: np.ndarray  # (E, 6, 3)
    ee_quat: np.ndarray           # (E, 4) as (x, y, z, w)

    def link_segments(self):
        """Capsule endpoints: (E, 6, 3) starts and ends."""
        return self.joint_positions[:, :6], self.joint_positions[:, 1:7]


@dataclass(frozen=True)
class ArmModel:
    """Kinematic chain description plus joint limits."""

    base_position: np.ndarray = field(default_factory=lambda: np.array([0.55, 0.0, 0.0]))
    base_yaw: float = np.pi  # x axis of the base frame faces the tree at the origin
    joint_offsets: np.ndarray = field(default_factory=lambda: np.array([
        [0.0, 0.0, 0.12],
        [0.0, 0.0, 0.08],
        [0.0, 0.0, 0.30],
        [0.0, 0.0, 0.25],
        [0.0, 0.0, 0.08],
        [0.0, 0.0, 0.08],
    ]))
    ee_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.10]))
    joint_axes: tuple = ("z", "y", "y", "z", "y", "z")
    link_radii: np.ndarray = field(default_factory=lambda: np.array(
        [0.050, 0.045, 0.040, 0.035, 0.030, 0.030]))
    position_limits: np.ndarray = field(default_factory=lambda: np.array(
        [[-2.9, 2.9], [-2.2, 2.2], [-2.2, 2.2], [-2.9, 2.9], [-2.2, 2.2], [-2.9, 2.9]]))
    velocity_limit: float = 1.2
    home_q: np.ndarray = field(default_factory=lambda: np.array(
        [0.0, 0.50, 0.70, 0.0, 0.50, 0.0]))

    def __post_init__(self):
        for name in ("base_position", "joint_offsets", "ee_offset", "link_radii",
                     "position_limits", "home_q"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.joint_offsets.shape != (6, 3):
            raise ValueError("joint_offsets must be (6, 3)")
        if len(self.joint_axes) != 6 or any(a not in _AXES for a in self.joint_axes):
            raise ValueError("joint_axes must be six of 'x'/'y'/'z'")
        if self.velocity_limit <= 0:
            raise ValueError("velocity_limit must be positive")
        if np.any(self.position_limits[:, 0] >= self.position_limits[:, 1]):
            raise ValueError("position limits must satisfy low < high")
        # cache the home pose so the zero-drift invariant is checkable exactly
        object.__setattr__(self, "home_pose", self.fk(self.home_q[None]))

    @property
    def reach(self) -> float:
        return float(np.linalg.norm(self.joint_offsets, axis=1).sum()
                     + np.linalg.norm(self.ee_offset))

    def clamp_q(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.position_limits[:, 0], self.position_limits[:, 1])

    def clamp_qdot(self, qdot: np.ndarray) -> np.ndarray:
        return np.clip(qdot, -self.velocity_limit, self.velocity_limit)

    def fk(self, q: np.ndarray) -> ArmPose:
        """Forward kinematics for (E, 6) configurations."""
        q = np.asarray(q, dtype=np.float64)
        if q.ndim == 1:
            q = q[None]
        E = q.shape[0]
        base_rot = Rotation.from_euler("z", self.base_yaw).as_matrix()
        rot = np.broadcast_to(base_rot, (E, 3, 3)).copy()
        pos = np.broadcast_to(self.base_position, (E, 3)).copy()

        joints = np.empty((E, 7, 3))
        rots = np.empty((E, 6, 3, 3))
        axes = np.empty((E, 6, 3))
        for i in range(6):
            pos = pos + np.einsum("eij,j->ei", rot, self.joint_offsets[i])
            joints[:, i] = pos
            axes[:, i] = rot[:, :, _AXES[self.joint_axes[i]]]
            rot = rot @ _axis_rotations(self.joint_axes[i], q[:, i])
            rots[:, i] = rot
        ee = pos + np.einsum("eij,j->ei", rot, self.ee_offset)
        joints[:, 6] = ee
        quat = Rotation.from_matrix(rot).as_quat().reshape(E, 4)
        # defensive renormalization; scipy output is already unit to rounding
        quat = quat / np.linalg.norm(quat, axis=1, keepdims=True)
        return ArmPose(joint_positions=joints, joint_rotations=rots,
                       joint_axes_world=axes, ee_quat=quat)

    def link_point_velocity_fields(self, pose: ArmPose, qdot: np.ndarray):
        """Per-link (W, B) such that a point x on link l moves at W_l x x + B_l.

        Link l is driven by joints 1..l+1, each contributing
        qdot_i * axis_i x (x - origin_i).
        """
        qdot = np.asarray(qdot, dtype=np.float64)
        if qdot.ndim == 1:
            qdot = qdot[None]
        contrib_w = pose.joint_axes_world * qdot[:, :, None]          # (E, 6, 3)
        contrib_b = -np.cross(contrib_w, pose.joint_positions[:, :6])  # (E, 6, 3)
        W = np.cumsum(contrib_w, axis=1)
        B = np.cumsum(contrib_b, axis=1)
        return W, B
