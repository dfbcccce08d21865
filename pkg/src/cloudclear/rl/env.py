"""Batched branch-clearance environments and on-policy rollout collection."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import SimulationDivergedError
from ..observation import EpisodeTracker, ObservationBuilder, observe_world, total_reward
from ..sim.scenario import make_batch, randomize_scenario
from ..sim.world import ContactReport
from .policy import policy_value, sample_actions


@dataclass(frozen=True)
class EnvConfig:
    """Rollout-side knobs: cloud sizes, sensor noise, reward weights."""

    n_whole_branch: int = 192
    n_zoomed: int = 128
    n_clearance: int = 48
    n_robot: int = 64
    noise_d_max: float = 0.0       # 0 disables cloud noise
    noise_fraction: float = 0.5
    w_h: float = 1.0
    w_q: float = 1.0
    w_sm: float = 1.0
    max_stale_steps: int = 30
    disabled_groups: tuple = ()

    def __post_init__(self):
        for name in ("n_whole_branch", "n_zoomed", "n_clearance", "n_robot"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_d_max < 0:
            raise ValueError("noise_d_max must be >= 0")

    @property
    def cloud_sizes(self):
        return {"whole_branch": self.n_whole_branch,
                "zoomed_branch": self.n_zoomed,
                "clearance": self.n_clearance,
                "robot": self.n_robot}

    @property
    def noise(self):
        if self.noise_d_max == 0.0:
            return None
        return (self.noise_d_max, self.noise_fraction)


class ClearanceEnv:
    """A batch of randomized clearance worlds behind reset/step.

    reset(seed) draws fresh scenarios; env i of a reset depends only on
    (seed, i), never on the batch size. step() advances the physics one
    control period, rebuilds observations, and returns per-env rewards
    and diagnostics. A diverged environment is replaced by a fresh
    scenario mid-episode and flagged; its done flag cuts the advantage
    recursion there.
    """

    def __init__(self, scenario, num_envs, config=None, bases=None, occlusion=None):
        if num_envs < 1:
            raise ValueError(f"num_envs must be >= 1, got {num_envs}")
        if bases is None:
            raise ValueError("bases is required (RffBasis or dict of them)")
        self.scenario = scenario
        self.num_envs = int(num_envs)
        self.config = config or EnvConfig()
        self.bases = bases
        self.occlusion = occlusion
        self.world = None
        self.builders = None
        self.trackers = None
        self._report = None
        self._noise_rngs = None
        self._reseed = None
        self.step_count = 0

    @property
    def training_mode(self):
        return bool(self.world.params.training_mode)

    def _make_builder(self):
        return ObservationBuilder(
            self.bases, occlusion=self.occlusion,
            max_stale_steps=self.config.max_stale_steps,
            disabled_groups=self.config.disabled_groups)

    def reset(self, seed):
        """Fresh scenarios for every env; returns the initial observations.

        seed may be an int or a SeedSequence (e.g. a spawned child).
        """
        ss = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        scen_ss, noise_ss, reseed_ss = ss.spawn(3)
        self.world = make_batch(self.scenario, scen_ss, self.num_envs)
        self.builders = [self._make_builder() for _ in range(self.num_envs)]
        self.trackers = [EpisodeTracker() for _ in range(self.num_envs)]
        self._noise_rngs = [np.random.default_rng(s)
                            for s in noise_ss.spawn(self.num_envs)]
        # reserve an independent stream for mid-episode divergence resets
        self._reseed = iter(_seed_stream(reseed_ss))
        self._report = None
        self.step_count = 0
        return self._observe()

    def _observe(self):
        return observe_world(self.world, self.builders, self.config.cloud_sizes,
                             noise=self.config.noise, rng=self._noise_rngs,
                             reports=self._report)

    def _replace_envs(self, indices):
        """Swap the given envs for fresh scenarios (divergence recovery)."""
        pieces = []
        for i in range(self.num_envs):
            if i in indices:
                pieces.append(randomize_scenario(self.scenario, next(self._reseed)))
                self.builders[i] = self._make_builder()
                self.trackers[i] = EpisodeTracker()
            else:
                pieces.append(self.world.select([i]))
        self.world = type(self.world).concat(pieces)

    def step(self, actions):
        """Advance one control period under the commanded joint velocities.

        Returns (observations, rewards, dones, info); info carries the
        h/touch/breach traces and the list of envs that diverged and were
        replaced this step.
        """
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        actions = np.asarray(actions, dtype=np.float64).reshape(self.num_envs, 6)
        dones = np.zeros(self.num_envs, dtype=bool)
        diverged = []
        try:
            self._report = self.world.step(actions)
        except SimulationDivergedError as err:
            diverged = sorted(set(err.env_indices))
            keep = [i for i in range(self.num_envs) if i not in diverged]
            # the failed step never committed: re-run it for the healthy
            # envs alone (batched stepping is sequential-equivalent, so
            # they evolve exactly as they would have)
            sub_report = None
            if keep:
                sub = self.world.select(keep)
                sub_report = sub.step(actions[keep])
            self._replace_envs(set(diverged))
            if keep:
                for slot, i in enumerate(keep):
                    self.world.q[i] = sub.q[slot]
                    self.world.qdot[i] = sub.qdot[slot]
                    self.world.theta[i] = sub.theta[slot]
                    self.world.omega[i] = sub.omega[slot]
                    self.world.time[i] = sub.time[slot]
                self.world._geom_cache = None
            self._report = self._pad_report(sub_report, keep)
            dones[diverged] = True

        observations = self._observe()
        rewards = np.empty(self.num_envs)
        h = np.empty(self.num_envs)
        touch = np.empty(self.num_envs)
        breach = np.empty(self.num_envs)
        for i, obs in enumerate(observations):
            r = total_reward(obs.occ_h, self.world.qdot[i], bool(obs.safety_breach),
                             w_h=self.config.w_h, w_q=self.config.w_q,
                             w_sm=self.config.w_sm)
            rewards[i] = r.total
            h[i] = obs.occ_h
            touch[i] = obs.touch
            breach[i] = obs.safety_breach
            self.trackers[i].update(obs.occ_h, bool(obs.touch), r.total)
        self.step_count += 1
        info = {"h": h, "touch": touch, "breach": breach, "diverged": diverged}
        return observations, rewards, dones, info

    def _pad_report(self, sub_report, keep):
        """Expand a kept-env contact report to full batch width (zeros for
        freshly replaced envs, which have not stepped yet)."""
        if sub_report is None:
            return None
        links = sub_report.branch_contact.shape[1]
        forces = np.zeros((self.num_envs, 6, 3))
        contact = np.zeros((self.num_envs, links), dtype=bool)
        pen = np.zeros(self.num_envs)
        for slot, i in enumerate(keep):
            forces[i] = sub_report.arm_link_forces[slot]
            contact[i] = sub_report.branch_contact[slot]
            pen[i] = sub_report.max_penetration[slot]
        return ContactReport(arm_link_forces=forces, branch_contact=contact,
                             max_penetration=pen)

    def episode_metrics(self):
        """EpisodeMetrics for every env over the steps since reset."""
        return [t.result() for t in self.trackers]


def _seed_stream(seed_seq):
    while True:
        yield seed_seq.spawn(1)[0]


@dataclass
class Trajectory:
    """One rollout batch: per-step tensors indexed (env, time, ...)."""

    obs: np.ndarray        # (E, T, obs_dim), raw (unnormalized)
    obs_normalized: np.ndarray  # (E, T, obs_dim), as seen by the policy
    actions: np.ndarray    # (E, T, act_dim)
    logprobs: np.ndarray   # (E, T)
    rewards: np.ndarray    # (E, T)
    values: np.ndarray     # (E, T+1), bootstrap in the last column
    dones: np.ndarray      # (E, T)
    h: np.ndarray          # (E, T)
    touch: np.ndarray      # (E, T)
    breach: np.ndarray     # (E, T)
    diverged_steps: int
    metrics: list = field(default_factory=list)

    def __post_init__(self):
        e, t = self.rewards.shape
        expect = {"obs": (e, t, self.obs.shape[2]),
                  "obs_normalized": (e, t, self.obs.shape[2]),
                  "actions": (e, t, self.actions.shape[2]),
                  "logprobs": (e, t), "dones": (e, t),
                  "h": (e, t), "touch": (e, t), "breach": (e, t),
                  "values": (e, t + 1)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}, "
                                 f"got {getattr(self, name).shape}")
        if not np.isfinite(self.rewards).all():
            raise ValueError("rewards must be finite")

    def flat_batch(self, advantages, returns):
        """Update-ready dict with (E*T, ...) rows."""
        e, t = self.rewards.shape
        return {
            "obs": self.obs_normalized.reshape(e * t, -1),
            "actions": self.actions.reshape(e * t, -1),
            "logprobs": self.logprobs.reshape(e * t),
            "advantages": advantages.reshape(e * t),
            "returns": returns.reshape(e * t),
        }


def rollout(env, params, horizon, rng, *, reset_seed, deterministic=False,
            on_step=None):
    """Collect horizon steps from every env under the current policy.

    Observations are normalized with params.norm as they stream in, but
    the statistics are not updated here; the trainer refreshes them
    between iterations so action log-probs stay consistent within a
    batch. on_step(world, t), when given, runs before each physics step
    (scripted-intervention hook for tests and oracles).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    observations = env.reset(reset_seed)
    e = env.num_envs
    obs_dim = observations[0].vector.size
    act_dim = params.action_dim

    obs = np.empty((e, horizon, obs_dim))
    obs_n = np.empty((e, horizon, obs_dim))
    actions = np.empty((e, horizon, act_dim))
    logprobs = np.empty((e, horizon))
    rewards = np.empty((e, horizon))
    values = np.empty((e, horizon + 1))
    dones = np.empty((e, horizon), dtype=bool)
    h = np.empty((e, horizon))
    touch = np.empty((e, horizon))
    breach = np.empty((e, horizon))
    diverged = 0

    obs_mat = np.stack([o.vector for o in observations])
    for t in range(horizon):
        obs[:, t] = obs_mat
        normed = params.norm.normalize(obs_mat)
        obs_n[:, t] = normed
        act, logp = sample_actions(params, normed, rng, deterministic=deterministic)
        values[:, t] = policy_value(params, normed)
        if on_step is not None:
            on_step(env.world, t)
        observations, step_rewards, step_dones, info = env.step(act)
        actions[:, t] = act
        logprobs[:, t] = logp
        rewards[:, t] = step_rewards
        dones[:, t] = step_dones
        h[:, t] = info["h"]
        touch[:, t] = info["touch"]
        breach[:, t] = info["breach"]
        diverged += len(info["diverged"])
        obs_mat = np.stack([o.vector for o in observations])
    values[:, horizon] = policy_value(params, params.norm.normalize(obs_mat))

    return Trajectory(obs=obs, obs_normalized=obs_n, actions=actions,
                      logprobs=logprobs, rewards=rewards, values=values,
                      dones=dones, h=h, touch=touch, breach=breach,
                      diverged_steps=diverged, metrics=env.episode_metrics())
