"""Deformable branch cluster, kinematic arm, and clearance cylinder.

A World holds E independent environments in stacked arrays; a single
environment is simply E = 1. Per-environment math never mixes rows, so
stepping a batch is bit-identical to stepping each environment alone.

Physics model: the arm integrates clamped joint velocities (infinitely stiff,
kinematic); tree links hang on spherical spring-damper joints driven back to
their rest orientation (PD) plus contact torques, integrated with
semi-implicit Euler; contacts are capsule-capsule penalty forces at the point
of closest approach with a Coulomb-style tangential clamp. In training mode
branch-line contacts are skipped entirely (no forces, no report entries)
while arm-line contacts remain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import SimulationDivergedError
from .arm import ArmModel, ArmPose
from .capsule import (
    capsule_penetration,
    point_segment_distance,
    sample_capsule_set_surface,
)
from .lsystem import TreeModel

CLOUD_SELECTORS = ("robot", "clearance", "whole_branch", "zoomed_branch")

_VEL_SMOOTHING = 1e-3  # m/s scale below which the friction clamp fades out


@dataclass(frozen=True)
class WorldParams:
    """Simulation constants shared by every environment in a batch.

    contact_stiffness is set so a 1 cm penetration produces 5 N, well above
    the 1 N touch threshold f_u. bend_only locks the twist component of every
    branch joint, leaving two bending DOFs. omega_max / theta_max are
    stability clamps, generous enough to stay inactive in normal motion.
    """

    dt: float = 1.0 / 60.0
    horizon: int = 1000
    training_mode: bool = False
    contact_stiffness: float = 500.0
    friction_mu: float = 0.3
    max_contact_force: float = 50.0
    force_threshold: float = 1.0  # f_u
    bend_only: bool = True
    omega_max: float = 20.0
    theta_max: float = 1.3
    zoom_radius: float = 0.3

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 1:
            raise ValueError("dt must be positive and horizon >= 1")
        for name in ("contact_stiffness", "max_contact_force", "force_threshold",
                     "omega_max", "theta_max", "zoom_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.friction_mu < 0:
            raise ValueError("friction_mu must be >= 0")


@dataclass(frozen=True)
class ContactReport:
    """Per-step contact summary for a batch.

    arm_link_forces holds the net reaction on each arm capsule (from branch
    contacts) plus any clearance-cylinder penalty force; branch_contact flags
    tree links touched by the arm or (outside training mode) the cylinder.
    """

    arm_link_forces: np.ndarray   # (E, 6, 3)
    branch_contact: np.ndarray    # (E, L) bool
    max_penetration: np.ndarray   # (E,)

    def for_env(self, i: int) -> "ContactReport":
        return ContactReport(self.arm_link_forces[i:i + 1],
                             self.branch_contact[i:i + 1],
                             self.max_penetration[i:i + 1])


def touch_indicator(report: ContactReport, f_u: float = 1.0) -> np.ndarray:
    """1.0 where any arm link's net contact force norm strictly exceeds f_u."""
    norms = np.linalg.norm(report.arm_link_forces, axis=-1)
    return (norms.max(axis=-1) > f_u).astype(np.float64)


def _rotvecs_to_matrices(v: np.ndarray) -> np.ndarray:
    shape = v.shape[:-1]
    return Rotation.from_rotvec(v.reshape(-1, 3)).as_matrix().reshape(*shape, 3, 3)


@dataclass
class _TreeStack:
    """Batched tree geometry; topology arrays are shared across the batch."""

    parent: np.ndarray              # (J,)
    ancestors: np.ndarray           # (J, J) float for einsum
    rest_rotation_local: np.ndarray  # (E, J, 3, 3)
    length: np.ndarray              # (E, J)
    radius: np.ndarray              # (E, J)
    stiffness: np.ndarray           # (E, J)
    damping: np.ndarray             # (E, J)
    inertia: np.ndarray             # (E, J)

    @classmethod
    def from_trees(cls, trees, stiffness_scales=None, damping_scales=None):
        first = trees[0]
        for t in trees[1:]:
            if not np.array_equal(t.parent, first.parent):
                raise ValueError("all trees in a batch must share topology")
        E = len(trees)
        ks = np.ones(E) if stiffness_scales is None else np.asarray(stiffness_scales, float)
        cs = np.ones(E) if damping_scales is None else np.asarray(damping_scales, float)
        return cls(
            parent=first.parent.copy(),
            ancestors=first.ancestors.astype(np.float64),
            rest_rotation_local=np.stack([t.rest_rotation_local for t in trees]),
            length=np.stack([t.length for t in trees]),
            radius=np.stack([t.radius for t in trees]),
            stiffness=np.stack([t.stiffness for t in trees]) * ks[:, None],
            damping=np.stack([t.damping for t in trees]) * cs[:, None],
            inertia=np.stack([t.inertia for t in trees]),
        )

    @property
    def num_links(self) -> int:
        return self.parent.shape[0]


class World:
    """E stacked environments sharing arm geometry and tree topology."""

    def __init__(self, *, trees, arm: ArmModel, params: WorldParams,
                 base_positions, base_rotations, line_starts, line_rotations,
                 line_lengths, line_radii, rngs,
                 stiffness_scales=None, damping_scales=None, friction_scales=None,
                 initial_q=None):
        self.tree = _TreeStack.from_trees(trees, stiffness_scales, damping_scales)
        self.arm = arm
        self.params = params
        E = len(trees)
        self.E = E
        J = self.tree.num_links

        self.base_pos = np.asarray(base_positions, float).reshape(E, 3)
        self.base_rot = np.asarray(base_rotations, float).reshape(E, 3, 3)
        self.line_start = np.asarray(line_starts, float).reshape(E, 3)
        self.line_rot = np.asarray(line_rotations, float).reshape(E, 3, 3)
        self.line_length = np.asarray(line_lengths, float).reshape(E)
        self.line_radius = np.asarray(line_radii, float).reshape(E)
        self.friction = (np.full(E, params.friction_mu) if friction_scales is None
                         else params.friction_mu * np.asarray(friction_scales, float))

        self.q = (np.tile(arm.home_q, (E, 1)) if initial_q is None
                  else np.asarray(initial_q, float).reshape(E, 6).copy())
        self.qdot = np.zeros((E, 6))
        self.theta = np.zeros((E, J, 3))
        self.omega = np.zeros((E, J, 3))
        self.time = np.zeros(E)
        self.steps = 0

        if len(rngs) != E:
            raise ValueError(f"need {E} generators, got {len(rngs)}")
        self.rngs = list(rngs)
        self._geom_cache = None

    # -- geometry ---------------------------------------------------------

    @property
    def line_end(self) -> np.ndarray:
        return self.line_start + self.line_rot[:, :, 2] * self.line_length[:, None]

    def tree_frames(self):
        """Per-link frames and segment endpoints under the current deflection.

        Returns (R_frame, R_world, joint_pos, tip): R_frame is the
        pre-deflection frame each joint's rotation vector lives in;
        R_world = R_frame @ exp(theta).
        """
        E, J = self.E, self.tree.num_links
        exp_theta = _rotvecs_to_matrices(self.theta)
        R_frame = np.empty((E, J, 3, 3))
        R_world = np.empty((E, J, 3, 3))
        joint_pos = np.empty((E, J, 3))
        tip = np.empty((E, J, 3))
        for j in range(J):
            p = self.tree.parent[j]
            if p < 0:
                R_frame[:, j] = self.base_rot @ self.tree.rest_rotation_local[:, j]
                joint_pos[:, j] = self.base_pos
            else:
                R_frame[:, j] = R_world[:, p] @ self.tree.rest_rotation_local[:, j]
                joint_pos[:, j] = tip[:, p]
            R_world[:, j] = R_frame[:, j] @ exp_theta[:, j]
            tip[:, j] = joint_pos[:, j] + R_world[:, j, :, 2] * self.tree.length[:, j, None]
        return R_frame, R_world, joint_pos, tip

    def geometry(self):
        """Cached per-step geometry: (arm pose, R_frame, R_world, joint_pos, tip)."""
        if self._geom_cache is None or self._geom_cache[0] != self.steps:
            pose = self.arm.fk(self.q)
            self._geom_cache = (self.steps, pose, *self.tree_frames())
        return self._geom_cache[1:]

    def ee_position(self) -> np.ndarray:
        pose = self.geometry()[0]
        return pose.joint_positions[:, 6]

    def ee_quat(self) -> np.ndarray:
        return self.geometry()[0].ee_quat

    def _arm_capsules(self, pose: ArmPose):
        starts, ends = pose.link_segments()
        radii = np.broadcast_to(self.arm.link_radii, (self.E, 6))
        return starts, ends, radii

    # -- stepping ---------------------------------------------------------

    def step(self, commands) -> ContactReport:
        """Advance every environment by dt under the commanded joint velocities."""
        p = self.params
        commands = np.asarray(commands, dtype=np.float64).reshape(self.E, 6)
        qdot = self.arm.clamp_qdot(commands)
        q_new = self.arm.clamp_q(self.q + p.dt * qdot)
        pose = self.arm.fk(q_new)

        R_frame, R_world, joint_pos, tip = self.tree_frames()
        E, J = self.E, self.tree.num_links

        # velocity fields: a point x on tree link l moves at W_l x x + B_l
        omega_world = np.einsum("ejab,ejb->eja", R_frame, self.omega)
        anc = self.tree.ancestors
        W_tree = np.einsum("al,eac->elc", anc, omega_world)
        B_tree = -np.einsum("al,eac->elc", anc, np.cross(omega_world, joint_pos))
        W_arm, B_arm = self.arm.link_point_velocity_fields(pose, qdot)

        a_start, a_end, a_rad = self._arm_capsules(pose)
        force_on_link = np.zeros((E, J, 3))
        moment_on_link = np.zeros((E, J, 3))
        arm_forces = np.zeros((E, 6, 3))
        branch_contact = np.zeros((E, J), dtype=bool)
        max_pen = np.zeros(E)

        # arm <-> tree
        depth, normal, cpoint = capsule_penetration(
            joint_pos[:, None, :, :], tip[:, None, :, :],
            self.tree.radius[:, None, :],
            a_start[:, :, None, :], a_end[:, :, None, :],
            a_rad[:, :, None],
        )  # (E, 6, J[, 3]); normal points from arm capsule toward tree link
        touching = depth > 0.0
        if touching.any():
            d = np.where(touching, depth, 0.0)
            fn = self.params.contact_stiffness * d[..., None] * normal
            v_tree = np.cross(W_tree[:, None], cpoint) + B_tree[:, None]
            v_arm = np.cross(W_arm[:, :, None], cpoint) + B_arm[:, :, None]
            v_rel = v_tree - v_arm
            vn = (v_rel * normal).sum(-1, keepdims=True)
            v_t = v_rel - vn * normal
            speed = np.linalg.norm(v_t, axis=-1, keepdims=True)
            fn_norm = np.linalg.norm(fn, axis=-1, keepdims=True)
            ffric = -self.friction[:, None, None, None] * fn_norm * v_t / (speed + _VEL_SMOOTHING)
            f = fn + ffric
            norm_f = np.linalg.norm(f, axis=-1, keepdims=True)
            scale = np.where(norm_f > p.max_contact_force,
                             p.max_contact_force / np.maximum(norm_f, 1e-300), 1.0)
            f = np.where(touching[..., None], f * scale, 0.0)

            force_on_link += f.sum(axis=1)
            moment_on_link += np.cross(cpoint, f).sum(axis=1)
            arm_forces += -f.sum(axis=2)
            branch_contact |= touching.any(axis=1)
            max_pen = np.maximum(max_pen, d.max(axis=(1, 2)))

        # tree <-> line (skipped under training-mode masking)
        if not p.training_mode:
            ls = self.line_start[:, None, :]
            le = self.line_end[:, None, :]
            depth, normal, cpoint = capsule_penetration(
                joint_pos, tip, self.tree.radius,
                np.broadcast_to(ls, joint_pos.shape),
                np.broadcast_to(le, joint_pos.shape),
                self.line_radius[:, None],
            )  # (E, J[, 3]); normal from line toward tree
            touching = depth > 0.0
            if touching.any():
                d = np.where(touching, depth, 0.0)
                fn = p.contact_stiffness * d[..., None] * normal
                v_rel = np.cross(W_tree, cpoint) + B_tree  # line is static
                vn = (v_rel * normal).sum(-1, keepdims=True)
                v_t = v_rel - vn * normal
                speed = np.linalg.norm(v_t, axis=-1, keepdims=True)
                fn_norm = np.linalg.norm(fn, axis=-1, keepdims=True)
                ffric = -self.friction[:, None, None] * fn_norm * v_t / (speed + _VEL_SMOOTHING)
                f = fn + ffric
                norm_f = np.linalg.norm(f, axis=-1, keepdims=True)
                scale = np.where(norm_f > p.max_contact_force,
                                 p.max_contact_force / np.maximum(norm_f, 1e-300), 1.0)
                f = np.where(touching[..., None], f * scale, 0.0)
                force_on_link += f
                moment_on_link += np.cross(cpoint, f)
                branch_contact |= touching
                max_pen = np.maximum(max_pen, d.max(axis=1))

        # arm <-> line: kinematic vs static, force reported only
        ls = self.line_start[:, None, :]
        le = self.line_end[:, None, :]
        depth, normal, _ = capsule_penetration(
            a_start, a_end, a_rad,
            np.broadcast_to(ls, a_start.shape),
            np.broadcast_to(le, a_start.shape),
            self.line_radius[:, None],
        )  # (E, 6[, 3]); normal from line toward arm
        touching = depth > 0.0
        if touching.any():
            d = np.where(touching, depth, 0.0)
            f = p.contact_stiffness * d[..., None] * normal
            norm_f = np.linalg.norm(f, axis=-1, keepdims=True)
            scale = np.where(norm_f > p.max_contact_force,
                             p.max_contact_force / np.maximum(norm_f, 1e-300), 1.0)
            f = np.where(touching[..., None], f * scale, 0.0)
            arm_forces += f
            max_pen = np.maximum(max_pen, d.max(axis=1))

        # joint torques in each joint's own frame
        tau_world = (np.einsum("al,elc->eac", anc, moment_on_link)
                     - np.cross(joint_pos, np.einsum("al,elc->eac", anc, force_on_link)))
        tau_local = np.einsum("ejba,ejb->eja", R_frame, tau_world)

        k = self.tree.stiffness[..., None]
        c = self.tree.damping[..., None]
        inertia = self.tree.inertia[..., None]
        acc = (-k * self.theta - c * self.omega + tau_local) / inertia
        omega = self.omega + p.dt * acc
        if p.bend_only:
            omega[..., 2] = 0.0
        w_norm = np.linalg.norm(omega, axis=-1, keepdims=True)
        omega = np.where(w_norm > p.omega_max,
                         omega * (p.omega_max / np.maximum(w_norm, 1e-300)), omega)
        theta = self.theta + p.dt * omega
        if p.bend_only:
            theta[..., 2] = 0.0
        t_norm = np.linalg.norm(theta, axis=-1, keepdims=True)
        theta = np.where(t_norm > p.theta_max,
                         theta * (p.theta_max / np.maximum(t_norm, 1e-300)), theta)

        if not (np.isfinite(theta).all() and np.isfinite(omega).all()
                and np.isfinite(q_new).all()):
            bad = np.nonzero(~(np.isfinite(theta).all(axis=(1, 2))
                               & np.isfinite(omega).all(axis=(1, 2))
                               & np.isfinite(q_new).all(axis=1)))[0]
            raise SimulationDivergedError(
                f"non-finite state in environments {bad.tolist()}",
                env_indices=bad.tolist())

        self.theta = theta
        self.omega = omega
        self.q = q_new
        self.qdot = qdot
        self.time = self.time + p.dt
        self.steps += 1
        self._geom_cache = None

        return ContactReport(arm_link_forces=arm_forces,
                             branch_contact=branch_contact,
                             max_penetration=max_pen)

    # -- point cloud sampling ---------------------------------------------

    def sample_cloud(self, selector: str, n: int, env: int) -> np.ndarray:
        """n surface samples for one environment.

        The zoomed selector crops to the clearance-line neighborhood and may
        legitimately come back with shape (0, 3) when no branch surface lies
        within zoom_radius. Draws from the environment's own generator, so
        per-env streams are independent of batch composition. Callers must
        keep a fixed per-step selector order for reproducibility.
        """
        if selector not in CLOUD_SELECTORS:
            raise ValueError(f"unknown selector {selector!r}; expected one of {CLOUD_SELECTORS}")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        pose, R_frame, R_world, joint_pos, tip = self.geometry()
        rng = self.rngs[env]

        if selector == "robot":
            starts, _ = pose.link_segments()
            lengths = np.linalg.norm(
                np.vstack([self.arm.joint_offsets[1:], self.arm.ee_offset[None]]), axis=1)
            return sample_capsule_set_surface(
                starts[env], pose.joint_rotations[env], lengths,
                self.arm.link_radii, n, rng)

        if selector == "clearance":
            return sample_capsule_set_surface(
                self.line_start[env][None], self.line_rot[env][None],
                self.line_length[env][None], self.line_radius[env][None],
                n, rng, lateral_only=True)

        pts = sample_capsule_set_surface(
            joint_pos[env], R_world[env], self.tree.length[env],
            self.tree.radius[env], n, rng)
        if selector == "whole_branch":
            return pts
        # zoomed: crop to the clearance-axis neighborhood
        d = point_segment_distance(pts, self.line_start[env], self.line_end[env])
        return pts[d <= self.params.zoom_radius]

    # -- batch plumbing -----------------------------------------------------

    def select(self, indices) -> "World":
        """A new World holding copies of the chosen environments' state."""
        idx = list(indices)
        w = object.__new__(World)
        w.tree = _TreeStack(
            parent=self.tree.parent,
            ancestors=self.tree.ancestors,
            rest_rotation_local=self.tree.rest_rotation_local[idx].copy(),
            length=self.tree.length[idx].copy(),
            radius=self.tree.radius[idx].copy(),
            stiffness=self.tree.stiffness[idx].copy(),
            damping=self.tree.damping[idx].copy(),
            inertia=self.tree.inertia[idx].copy(),
        )
        w.arm = self.arm
        w.params = self.params
        w.E = len(idx)
        for name in ("base_pos", "base_rot", "line_start", "line_rot", "line_length",
                     "line_radius", "friction", "q", "qdot", "theta", "omega", "time"):
            setattr(w, name, getattr(self, name)[idx].copy())
        w.steps = self.steps
        w.rngs = [self.rngs[i] for i in idx]
        w._geom_cache = None
        return w

    @classmethod
    def concat(cls, worlds) -> "World":
        """Stack single-or-batched worlds sharing arm, params, and topology."""
        first = worlds[0]
        for other in worlds[1:]:
            if other.arm is not first.arm and not np.array_equal(
                    other.arm.home_q, first.arm.home_q):
                raise ValueError("worlds must share the arm model")
            if other.params != first.params:
                raise ValueError("worlds must share WorldParams")
            if not np.array_equal(other.tree.parent, first.tree.parent):
                raise ValueError("worlds must share tree topology")
        w = object.__new__(cls)
        w.tree = _TreeStack(
            parent=first.tree.parent,
            ancestors=first.tree.ancestors,
            rest_rotation_local=np.concatenate([x.tree.rest_rotation_local for x in worlds]),
            length=np.concatenate([x.tree.length for x in worlds]),
            radius=np.concatenate([x.tree.radius for x in worlds]),
            stiffness=np.concatenate([x.tree.stiffness for x in worlds]),
            damping=np.concatenate([x.tree.damping for x in worlds]),
            inertia=np.concatenate([x.tree.inertia for x in worlds]),
        )
        w.arm = first.arm
        w.params = first.params
        w.E = sum(x.E for x in worlds)
        for name in ("base_pos", "base_rot", "line_start", "line_rot", "line_length",
                     "line_radius", "friction", "q", "qdot", "theta", "omega", "time"):
            setattr(w, name, np.concatenate([getattr(x, name) for x in worlds]))
        w.steps = first.steps
        w.rngs = [g for x in worlds for g in x.rngs]
        w._geom_cache = None
        return w


def ssed_update(desired_q, actual_q, action, dt, sync_now, position_limits=None):
    """Synchronized desired-state integrator.

    When sync_now is set the desired state snaps to the measured actual state
    before integrating; the action then advances it by action * dt, clamped
    to the position limits when given. Pure function: inputs are not mutated.
    """
    desired = np.array(actual_q if sync_now else desired_q, dtype=np.float64, copy=True)
    desired = desired + np.asarray(action, dtype=np.float64) * dt
    if position_limits is not None:
        lim = np.asarray(position_limits, dtype=np.float64)
        desired = np.clip(desired, lim[..., 0], lim[..., 1])
    return desired


def add_cloud_noise(points, d_max, subsample_fraction, rng):
    """Domain-randomize a cloud: subsample, permute, and jitter.

    Keeps ceil(subsample_fraction * N) points chosen uniformly without
    replacement (order permuted), then adds zero-mean Gaussian noise with
    sigma = d_max / 3 per coordinate. rng may be a seed or a Generator.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got {pts.shape}")
    if not 0.0 < subsample_fraction <= 1.0:
        raise ValueError(f"subsample_fraction must be in (0, 1], got {subsample_fraction}")
    if d_max < 0:
        raise ValueError(f"d_max must be >= 0, got {d_max}")
    if pts.shape[0] == 0:
        return pts.copy()
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    m = int(np.ceil(subsample_fraction * pts.shape[0]))
    idx = gen.permutation(pts.shape[0])[:m]
    out = pts[idx]
    if d_max > 0:
        out = out + gen.normal(0.0, d_max / 3.0, size=out.shape)
    return out
