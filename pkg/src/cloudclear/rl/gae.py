"""Generalized advantage estimation over batched trajectories."""

import numpy as np


def gae_advantages(rewards, values, dones, beta, lam):
    """(advantages, returns) from per-step rewards and value estimates.

    rewards and dones have shape (E, T) (a single env may pass (T,));
    values has shape (E, T+1), the extra column being the bootstrap
    estimate of the state after the last step. done=True cuts both the
    bootstrap and the advantage recursion at that step. returns are
    advantages + values and serve as value-function targets.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards = rewards[None]
        values = values[None]
    dones = np.asarray(dones, dtype=bool).reshape(rewards.shape[0], -1)
    e, t = rewards.shape
    if values.shape != (e, t + 1):
        raise ValueError(
            f"values must have shape {(e, t + 1)} (bootstrap column included), "
            f"got {values.shape}")
    if dones.shape != (e, t):
        raise ValueError(f"dones must have shape {(e, t)}, got {dones.shape}")
    if not np.isfinite(rewards).all():
        raise ValueError("rewards must be finite")
    if not (0.0 < beta < 1.0) and beta != 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")

    live = 1.0 - dones.astype(np.float64)
    delta = rewards + beta * values[:, 1:] * live - values[:, :-1]
    advantages = np.empty_like(rewards)
    acc = np.zeros(e)
    for step in range(t - 1, -1, -1):
        acc = delta[:, step] + beta * lam * live[:, step] * acc
        advantages[:, step] = acc
    returns = advantages + values[:, :-1]
    if squeeze:
        return advantages[0], returns[0]
    return advantages, returns
