"""Training loop: alternate rollouts and clipped-surrogate updates."""

import dataclasses
import json
import os
import re
from dataclasses import dataclass

import numpy as np

from ..errors import SimulationDivergedError
from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .env import Trajectory, rollout
from .gae import gae_advantages
from .policy import init_policy
from .ppo import PpoSettings, ppo_update

OBS_DIM_DEFAULT = 88
ACTION_DIM = 6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for train(); defaults are conventional choices.

    The discount, horizon, and clipped-objective structure are the load-
    bearing pieces; the numeric defaults (0.99/0.95/0.2, 3 epochs, 2x256
    hidden, 3e-4) are standard values adopted for want of published ones.
    """

    beta: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 3
    minibatch_size: int = 256
    horizon: int = 48
    num_envs: int = 8
    iterations: int = 10
    seed: int = 0
    hidden: tuple = (256, 256)
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    grad_clip: float = 0.5
    adv_norm: bool = True
    init_log_std: float = -0.7
    checkpoint_every: int = 50

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError(f"clip_epsilon must lie in (0, 1), got {self.clip_epsilon}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("epochs", "minibatch_size", "horizon", "num_envs",
                     "iterations", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def settings(self):
        return PpoSettings(
            clip_epsilon=self.clip_epsilon, learning_rate=self.learning_rate,
            epochs=self.epochs, minibatch_size=self.minibatch_size,
            vf_coef=self.vf_coef, ent_coef=self.ent_coef,
            grad_clip=self.grad_clip, adv_norm=self.adv_norm)


def iteration_rngs(seed, iteration):
    """Per-iteration generator pair (actions, minibatch shuffles).

    Streams depend only on (seed, iteration), so a resumed run replays
    the same randomness as an uninterrupted one.
    """
    ss = np.random.SeedSequence(entropy=(int(seed), int(iteration)))
    act_ss, shuffle_ss, env_ss = ss.spawn(3)
    return (np.random.default_rng(act_ss), np.random.default_rng(shuffle_ss),
            env_ss)


def iteration_record(iteration, traj: Trajectory, diag):
    """One JSON-lines metrics record (no wall-clock fields: byte-stable)."""
    metrics = traj.metrics
    record = {
        "iteration": int(iteration),
        "train_reward": float(np.mean([m.cumulative_reward for m in metrics])),
        "mean_h": float(traj.h.mean()),
        "final_h": float(traj.h[:, -1].mean()),
        "success_rate_pct": float(100.0 * np.mean([m.success for m in metrics])),
        "mean_occ_drop_pct": float(np.mean([m.occ_drop_pct for m in metrics])),
        "mean_touch_pct": float(np.mean([m.touch_pct for m in metrics])),
        "diverged_steps": int(traj.diverged_steps),
    }
    for key in ("policy_loss", "value_loss", "entropy", "clip_fraction",
                "approx_kl", "grad_norm", "updates"):
        record[key] = diag[key]
    record["aborted"] = bool(diag["aborted"])
    return record


def _latest_checkpoint(out_dir):
    pattern = re.compile(r"^iter_(\d{6})$")
    best = None
    ckpt_root = os.path.join(out_dir, "checkpoints")
    if os.path.isdir(ckpt_root):
        for name in os.listdir(ckpt_root):
            m = pattern.match(name)
            if m:
                k = int(m.group(1))
                if best is None or k > best[0]:
                    best = (k, os.path.join(ckpt_root, name))
    return best


def train(config: TrainConfig, env, out_dir=None, *, resume=False, log_fn=None):
    """Run the configured number of rollout/update iterations.

    env is a ClearanceEnv whose num_envs matches the config. When out_dir
    is given, metrics stream to metrics.jsonl and checkpoints land under
    checkpoints/iter_NNNNNN (plus checkpoints/final). resume=True picks
    up from the newest checkpoint in out_dir; optimizer moments restart,
    but per-iteration seeding makes the remaining randomness identical
    to an uninterrupted run. Returns (params, records).
    """
    if env.num_envs != config.num_envs:
        raise ValueError(
            f"env has {env.num_envs} envs, config expects {config.num_envs}")
    cfg_hash = config_hash(dataclasses.asdict(config))
    settings = config.settings()

    start_iter = 0
    params = None
    if resume:
        if out_dir is None:
            raise ValueError("resume requires out_dir")
        latest = _latest_checkpoint(out_dir)
        if latest is not None:
            params, manifest = load_checkpoint(latest[1])
            start_iter = int(manifest["iteration"]) + 1
    if params is None:
        init_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(config.seed, 0x5EED)))
        params = init_policy(OBS_DIM_DEFAULT, ACTION_DIM, config.hidden,
                             init_rng, init_log_std=config.init_log_std)

    metrics_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"),
                          "a" if resume and start_iter else "w")

    optimizer = None
    records = []
    consecutive_aborts = 0
    try:
        for iteration in range(start_iter, config.iterations):
            act_rng, shuffle_rng, env_ss = iteration_rngs(config.seed, iteration)
            traj = rollout(env, params, config.horizon, act_rng,
                           reset_seed=env_ss)
            advantages, returns = gae_advantages(
                traj.rewards, traj.values, traj.dones,
                config.beta, config.gae_lambda)
            params, diag, optimizer = ppo_update(
                params, traj.flat_batch(advantages, returns),
                settings, shuffle_rng, optimizer)
            if diag["aborted"]:
                consecutive_aborts += 1
                if consecutive_aborts >= 3:
                    raise SimulationDivergedError(
                        "optimization produced non-finite losses on 3 "
                        "consecutive iterations")
            else:
                consecutive_aborts = 0
                # refresh observation statistics for the next rollout
                params.norm.update(traj.obs.reshape(-1, traj.obs.shape[-1]))

            record = iteration_record(iteration, traj, diag)
            records.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if log_fn is not None:
                log_fn(record)
            if out_dir is not None and (
                    (iteration + 1) % config.checkpoint_every == 0
                    or iteration == config.iterations - 1):
                save_checkpoint(
                    os.path.join(out_dir, "checkpoints", f"iter_{iteration:06d}"),
                    params, config_hash=cfg_hash, iteration=iteration)
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "checkpoints", "final"),
                            params, config_hash=cfg_hash,
                            iteration=config.iterations - 1)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return params, records
