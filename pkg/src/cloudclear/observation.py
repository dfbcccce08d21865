"""Observation assembly, reward terms, and per-episode metrics.

The observation is a fixed-layout vector of eleven feature groups:
proprioception (q, qdot, end-effector quaternion), four cloud embeddings
(whole branch, zoomed branch, clearance, robot), a binary touch indicator,
the five end-effector-to-branch distances, a binary safety-breach flag, and
the occlusion score h. With the default 16-dim embeddings the width is 88.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clouds import as_points
from .embedding import RffBasis, embed_cloud
from .errors import EmptyCloudError, StaleObservationError
from .occlusion import (
    OcclusionParams,
    ee_branch_distances,
    occlusion_heuristic,
    safety_breach,
)

OBS_DIM = 88

# (name, width) in vector order; widths for the default 16-dim embeddings
FEATURE_GROUPS = (
    ("q", 6),
    ("qdot", 6),
    ("ee_quat", 4),
    ("kme_wbr", 16),
    ("kme_zbr", 16),
    ("kme_clr", 16),
    ("kme_rob", 16),
    ("touch", 1),
    ("ee_branch_dists", 5),
    ("safety_breach", 1),
    ("occ_h", 1),
)

GROUP_NAMES = tuple(name for name, _ in FEATURE_GROUPS)

CLOUD_SLOT_TAGS = ("whole_branch", "zoomed_branch", "clearance", "robot")


def group_offsets(embed_dim: int = 16) -> dict:
    """Start offset of each feature group for a given embedding width."""
    widths = dict(FEATURE_GROUPS)
    for slot in ("kme_wbr", "kme_zbr", "kme_clr", "kme_rob"):
        widths[slot] = embed_dim
    offsets, pos = {}, 0
    for name, _ in FEATURE_GROUPS:
        offsets[name] = pos
        pos += widths[name]
    return offsets


GROUP_OFFSETS = group_offsets()


@dataclass(frozen=True)
class Observation:
    """One environment's feature groups plus assembly diagnostics.

    Field values are always the true (unmasked) quantities so rewards and
    metrics stay correct; masked_groups only zeroes slices of .vector.
    """

    q: np.ndarray
    qdot: np.ndarray
    ee_quat: np.ndarray
    kme_wbr: np.ndarray
    kme_zbr: np.ndarray
    kme_clr: np.ndarray
    kme_rob: np.ndarray
    touch: float
    ee_branch_dists: np.ndarray
    safety_breach: float
    occ_h: float
    stale_wbr: int = 0
    stale_zbr: int = 0
    zoomed_empty: bool = False
    masked_groups: frozenset = field(default_factory=frozenset)

    @property
    def vector(self) -> np.ndarray:
        parts = []
        for name, _ in FEATURE_GROUPS:
            value = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if name in self.masked_groups:
                value = np.zeros_like(value)
            parts.append(value)
        return np.concatenate(parts)


class ObservationBuilder:
    """Assembles one environment's observation each step.

    Stateful only for dropout fallback: when a branch cloud arrives as None
    (sensor dropout) the previous embedding-derived values are reused and a
    staleness counter runs; after max_stale_steps consecutive misses the next
    miss raises. A zoomed cloud with zero points is different: the crop region is
    genuinely empty, which proves h = 0 (every branch point sits farther
    from the clearance surface than d_th), so that slot becomes a zero
    embedding with a fresh h = 0 rather than a stale reuse.

    bases may be a single RffBasis shared by all four cloud slots or a
    mapping from slot tag to basis. disabled_groups names feature groups to
    zero in the output vector (ablation masking); widths never change.
    """

    def __init__(self, bases, occlusion: OcclusionParams | None = None,
                 f_u: float = 1.0, max_stale_steps: int = 30,
                 disabled_groups=()):
        if isinstance(bases, RffBasis):
            bases = {tag: bases for tag in CLOUD_SLOT_TAGS}
        missing = set(CLOUD_SLOT_TAGS) - set(bases)
        if missing:
            raise ValueError(f"missing bases for cloud slots: {sorted(missing)}")
        self.bases = {tag: bases[tag] for tag in CLOUD_SLOT_TAGS}
        self.occlusion = occlusion if occlusion is not None else OcclusionParams()
        if f_u <= 0:
            raise ValueError(f"f_u must be positive, got {f_u}")
        self.f_u = float(f_u)
        if max_stale_steps < 1:
            raise ValueError(f"max_stale_steps must be >= 1, got {max_stale_steps}")
        self.max_stale_steps = int(max_stale_steps)
        unknown = set(disabled_groups) - set(GROUP_NAMES)
        if unknown:
            raise ValueError(f"unknown feature groups: {sorted(unknown)}")
        self.disabled_groups = frozenset(disabled_groups)
        self.reset()

    def reset(self):
        """Forget dropout-fallback state (call on episode reset)."""
        self._last_wbr = None   # (embedding, ee distances)
        self._last_zbr = None   # embedding
        self._last_h = None
        self._stale_whole_branch = 0
        self._stale_zoomed_branch = 0

    def _stale_tick(self, slot: str) -> int:
        count = getattr(self, f"_stale_{slot}") + 1
        setattr(self, f"_stale_{slot}", count)
        if count > self.max_stale_steps:
            raise StaleObservationError(
                f"{slot} cloud stale beyond {self.max_stale_steps} consecutive steps")
        return count

    def build(self, *, q, qdot, ee_quat, ee_position, clouds,
              arm_link_forces) -> Observation:
        """One observation from this step's sensor values.

        clouds maps slot tags to (N, 3) arrays; whole_branch/zoomed_branch
        may be None to signal sensor dropout. arm_link_forces is the (L, 3)
        net contact force per arm link from the contact report.
        """
        q = np.asarray(q, dtype=np.float64).reshape(6).copy()
        qdot = np.asarray(qdot, dtype=np.float64).reshape(6).copy()
        quat = np.asarray(ee_quat, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(quat)
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError("ee_quat must be a nonzero finite quaternion")
        quat = quat / norm
        ee_position = np.asarray(ee_position, dtype=np.float64).reshape(3)

        forces = np.asarray(arm_link_forces, dtype=np.float64).reshape(-1, 3)
        touch = float(bool(forces.size)
                      and np.linalg.norm(forces, axis=1).max() > self.f_u)

        occ = self.occlusion
        robot = as_points(clouds.get("robot")) if clouds.get("robot") is not None else None
        clearance = (as_points(clouds.get("clearance"))
                     if clouds.get("clearance") is not None else None)
        if robot is None or robot.shape[0] == 0:
            raise EmptyCloudError("robot cloud must be present and non-empty")
        if clearance is None or clearance.shape[0] == 0:
            raise EmptyCloudError("clearance cloud must be present and non-empty")
        kme_rob = embed_cloud(robot, self.bases["robot"]).values
        kme_clr = embed_cloud(clearance, self.bases["clearance"]).values
        breach = float(safety_breach(robot, clearance, k=occ.k_local, d_sm=occ.d_sm))

        wbr = clouds.get("whole_branch")
        if wbr is None:
            stale = self._stale_tick("whole_branch")
            if self._last_wbr is None:
                raise StaleObservationError(
                    "whole_branch cloud missing with no previous value to reuse")
            kme_wbr, ee_dists = self._last_wbr
            stale_wbr = stale
        else:
            wbr = as_points(wbr)
            if wbr.shape[0] == 0:
                raise EmptyCloudError("whole_branch cloud is empty")
            self._stale_whole_branch = 0
            stale_wbr = 0
            kme_wbr = embed_cloud(wbr, self.bases["whole_branch"]).values
            ee_dists = ee_branch_distances(ee_position, wbr, k=occ.k_local)
            self._last_wbr = (kme_wbr, ee_dists)

        zbr = clouds.get("zoomed_branch")
        zoomed_empty = False
        if zbr is None:
            stale = self._stale_tick("zoomed_branch")
            if self._last_zbr is None:
                raise StaleObservationError(
                    "zoomed_branch cloud missing with no previous value to reuse")
            kme_zbr = self._last_zbr
            stale_zbr = stale
        else:
            zbr = as_points(zbr)
            self._stale_zoomed_branch = 0
            stale_zbr = 0
            if zbr.shape[0] == 0:
                zoomed_empty = True
                kme_zbr = np.zeros(self.bases["zoomed_branch"].output_dim)
            else:
                kme_zbr = embed_cloud(zbr, self.bases["zoomed_branch"]).values
            self._last_zbr = kme_zbr

        # h follows its source cloud: fresh when the cloud is fresh, stale on
        # dropout; an empty zoomed crop is provably clear (h = 0).
        source = zbr if occ.heuristic_cloud == "zoomed_branch" else wbr
        if source is None:
            h = self._last_h
        elif occ.heuristic_cloud == "zoomed_branch" and zoomed_empty:
            h = 0.0
            self._last_h = h
        else:
            h = occlusion_heuristic(source, clearance, k=occ.k_pairs, d_th=occ.d_th)
            self._last_h = h

        return Observation(
            q=q, qdot=qdot, ee_quat=quat,
            kme_wbr=kme_wbr, kme_zbr=kme_zbr, kme_clr=kme_clr, kme_rob=kme_rob,
            touch=touch, ee_branch_dists=ee_dists, safety_breach=breach,
            occ_h=float(h), stale_wbr=stale_wbr, stale_zbr=stale_zbr,
            zoomed_empty=zoomed_empty, masked_groups=self.disabled_groups,
        )


def observe_world(world, builders, n_points, noise=None, rng=None,
                  reports=None):
    """Observations for every environment of a batched world.

    builders: one ObservationBuilder per environment. n_points maps slot
    tags to sample counts. noise, when given, is (d_max, subsample_fraction)
    applied to each sampled cloud via add_cloud_noise using the matching
    per-env generator from rng (a list of Generators). reports is the last
    ContactReport (None means zero forces, e.g. at episode start).
    """
    from .sim.world import add_cloud_noise  # local import avoids a cycle

    if len(builders) != world.E:
        raise ValueError(f"need {world.E} builders, got {len(builders)}")
    ee_pos = world.ee_position()
    ee_quat = world.ee_quat()
    observations = []
    for i in range(world.E):
        clouds = {}
        for tag in CLOUD_SLOT_TAGS:
            pts = world.sample_cloud(tag, n_points[tag], i)
            if noise is not None and pts.shape[0] > 0:
                d_max, fraction = noise
                clouds[tag] = add_cloud_noise(pts, d_max, fraction, rng[i])
            else:
                clouds[tag] = pts
        forces = (np.zeros((6, 3)) if reports is None
                  else reports.arm_link_forces[i])
        observations.append(builders[i].build(
            q=world.q[i], qdot=world.qdot[i], ee_quat=ee_quat[i],
            ee_position=ee_pos[i], clouds=clouds, arm_link_forces=forces))
    return observations


# -- rewards -------------------------------------------------------------


@dataclass(frozen=True)
class RewardBreakdown:
    """Raw reward components and their (optionally weighted) sum."""

    r_h: float
    r_q: float
    r_sm: float
    total: float


def clearance_reward(h: float) -> float:
    """(1 / (1 + h^2))^2: equals 1 at h=0, 0.64 at h=0.5, 0.25 at h=1."""
    h = float(h)
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"h must be in [0, 1], got {h}")
    return (1.0 / (1.0 + h * h)) ** 2


def smoothness_reward(qdot) -> float:
    """-sum(qdot^2)/100 over exactly six joints."""
    qd = np.asarray(qdot, dtype=np.float64).reshape(-1)
    if qd.shape != (6,):
        raise ValueError(f"expected 6 joint velocities, got shape {qd.shape}")
    if not np.isfinite(qd).all():
        raise ValueError("joint velocities must be finite")
    return float(-(qd @ qd) / 100.0)


def safety_reward(breach) -> float:
    """0.4 when the safety margin held this step, 0 on a breach."""
    return 0.0 if breach else 0.4


def total_reward(h, qdot, breach, w_h: float = 1.0, w_q: float = 1.0,
                 w_sm: float = 1.0) -> RewardBreakdown:
    """All three terms; total applies the (default unit) config weights."""
    r_h = clearance_reward(h)
    r_q = smoothness_reward(qdot)
    r_sm = safety_reward(breach)
    return RewardBreakdown(r_h=r_h, r_q=r_q, r_sm=r_sm,
                           total=w_h * r_h + w_q * r_q + w_sm * r_sm)


# -- episode metrics -------------------------------------------------------


SUCCESS_RUN_LENGTH = 10


@dataclass(frozen=True)
class EpisodeMetrics:
    success: bool
    occ_drop_pct: float
    touch_pct: float
    steps_in_success: int
    cumulative_reward: float


class EpisodeTracker:
    """Accumulates one episode's h/contact/reward trace into EpisodeMetrics.

    success: some run of >= 10 consecutive steps with h exactly 0.
    steps_in_success: h == 0 steps counted from the onset of the first
    qualifying run through the end of the episode (interruptions excluded).
    occ_drop_pct: 100 * (h_first - h_last) / h_first, 0 when h_first is 0;
    negative when the scene got worse.
    """

    def __init__(self):
        self.reset()

    def reset(self):
        self._steps = 0
        self._h_start = 0.0
        self._h_end = 0.0
        self._run = 0
        self._success = False
        self._zeros_since_onset = 0
        self._breach_steps = 0
        self._reward = 0.0

    @property
    def steps(self) -> int:
        return self._steps

    def update(self, h, breach, reward: float = 0.0):
        h = float(h)
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"h must be in [0, 1], got {h}")
        if self._steps == 0:
            self._h_start = h
        self._h_end = h
        self._steps += 1
        self._breach_steps += bool(breach)
        self._reward += float(reward)
        if h == 0.0:
            self._run += 1
            if self._success:
                self._zeros_since_onset += 1
            elif self._run >= SUCCESS_RUN_LENGTH:
                self._success = True
                self._zeros_since_onset = self._run
        else:
            self._run = 0

    def result(self) -> EpisodeMetrics:
        if self._steps == 0:
            raise ValueError("no steps recorded")
        if self._h_start == 0.0:
            drop = 0.0
        else:
            drop = 100.0 * (self._h_start - self._h_end) / self._h_start
        return EpisodeMetrics(
            success=self._success,
            occ_drop_pct=drop,
            touch_pct=100.0 * self._breach_steps / self._steps,
            steps_in_success=self._zeros_since_onset,
            cumulative_reward=self._reward,
        )
