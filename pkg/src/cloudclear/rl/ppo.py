"""Clipped-surrogate policy optimization with hand-written gradients."""

from dataclasses import dataclass

import numpy as np

from .nets import (
    Adam,
    clip_grad_norm,
    flatten_params,
    mlp_backward,
    mlp_forward,
    unflatten_params,
)
from .policy import LOG_2PI, LOG_STD_MIN, effective_log_std, gaussian_entropy


@dataclass(frozen=True)
class PpoSettings:
    """Optimization knobs for ppo_update (subset of the train config)."""

    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 3
    minibatch_size: int = 256
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    grad_clip: float = 0.5
    adv_norm: bool = True

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError(f"clip_epsilon must lie in (0, 1), got {self.clip_epsilon}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("epochs and minibatch_size must be >= 1")


def ppo_loss_and_grads(actor, critic, log_std, obs, actions, old_logprobs,
                       advantages, returns, *, clip_epsilon, vf_coef, ent_coef):
    """Total loss and analytic gradients for one minibatch.

    obs rows are already normalized. Returns (loss, actor_grads,
    critic_grads, dlog_std, diagnostics). The policy term is the clipped
    surrogate; when the unclipped branch loses the min, the ratio sits
    outside the clip band and its gradient is exactly zero.
    """
    b = obs.shape[0]
    mean, cache_a = mlp_forward(actor, obs)
    value_out, cache_c = mlp_forward(critic, obs)
    values = value_out[:, 0]

    ls = effective_log_std(log_std)
    std = np.exp(ls)
    z = (actions - mean) / std
    logprobs = -0.5 * (z * z).sum(axis=1) - ls.sum() - 0.5 * mean.shape[1] * LOG_2PI

    ratio = np.exp(logprobs - old_logprobs)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_err = values - returns
    value_loss = 0.5 * (value_err ** 2).mean()
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + vf_coef * value_loss - ent_coef * entropy

    # d(policy_loss)/d(logprob): only where the unclipped branch is active
    unclipped = surr1 <= surr2
    dlogp = np.where(unclipped, -advantages * ratio, 0.0) / b
    dmean = dlogp[:, None] * (z / std)
    dls = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - ent_coef
    dlog_std = np.where(log_std > LOG_STD_MIN, dls, 0.0)

    actor_grads = mlp_backward(actor, cache_a, dmean)
    critic_grads = mlp_backward(critic, cache_c,
                                (vf_coef * value_err / b)[:, None])
    diagnostics = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float((~unclipped).mean()),
        "approx_kl": float((old_logprobs - logprobs).mean()),
    }
    return float(loss), actor_grads, critic_grads, dlog_std, diagnostics


def normalize_advantages(advantages):
    """Shift/scale normalization; preserves the ranking of advantages."""
    std = advantages.std()
    return (advantages - advantages.mean()) / (std + 1e-8)


def _flatten_all(actor, critic, log_std):
    return np.concatenate([flatten_params(actor), flatten_params(critic), log_std])


def _unflatten_all(flat, actor_sizes, critic_sizes, action_dim):
    n_a = sum(i * o + o for i, o in zip(actor_sizes[:-1], actor_sizes[1:]))
    n_c = sum(i * o + o for i, o in zip(critic_sizes[:-1], critic_sizes[1:]))
    actor = unflatten_params(flat[:n_a], actor_sizes)
    critic = unflatten_params(flat[n_a:n_a + n_c], critic_sizes)
    log_std = flat[n_a + n_c:].copy()
    if log_std.size != action_dim:
        raise ValueError("flat vector does not match the declared layout")
    return actor, critic, log_std


def ppo_update(params, batch, settings, rng, optimizer=None):
    """One PPO optimization phase over a rollout batch.

    batch carries flat arrays: obs (B, obs_dim) already normalized,
    actions (B, act_dim), logprobs (B,), advantages (B,), returns (B,).
    Minibatch order comes from rng, so a fixed seed fixes the whole
    update. Mutates params' weights in place only on success; a
    non-finite loss aborts the update and returns the entry state
    untouched (diagnostics flag the abort). Returns (params, diagnostics,
    optimizer) with the optimizer reusable across iterations.
    """
    obs = np.asarray(batch["obs"], dtype=np.float64)
    actions = np.asarray(batch["actions"], dtype=np.float64)
    old_logprobs = np.asarray(batch["logprobs"], dtype=np.float64)
    advantages = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    b = obs.shape[0]
    if not (actions.shape[0] == old_logprobs.size == advantages.size == returns.size == b):
        raise ValueError("batch fields disagree on sample count")

    if settings.adv_norm:
        advantages = normalize_advantages(advantages)

    actor_sizes = tuple([params.actor[0][0].shape[0]]
                        + [w.shape[1] for w, _ in params.actor])
    critic_sizes = tuple([params.critic[0][0].shape[0]]
                         + [w.shape[1] for w, _ in params.critic])
    entry_flat = _flatten_all(params.actor, params.critic, params.log_std)
    flat = entry_flat.copy()
    if optimizer is None:
        optimizer = Adam(flat.size, lr=settings.learning_rate)
    opt_entry = (optimizer.m.copy(), optimizer.v.copy(), optimizer.t)

    mb = min(settings.minibatch_size, b)
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
           "clip_fraction": 0.0, "approx_kl": 0.0, "grad_norm": 0.0}
    n_updates = 0
    for _ in range(settings.epochs):
        order = rng.permutation(b)
        for start in range(0, b - mb + 1, mb):
            idx = order[start:start + mb]
            actor, critic, log_std = _unflatten_all(
                flat, actor_sizes, critic_sizes, params.action_dim)
            loss, g_actor, g_critic, g_ls, diag = ppo_loss_and_grads(
                actor, critic, log_std,
                obs[idx], actions[idx], old_logprobs[idx],
                advantages[idx], returns[idx],
                clip_epsilon=settings.clip_epsilon,
                vf_coef=settings.vf_coef, ent_coef=settings.ent_coef)
            if not np.isfinite(loss):
                optimizer.m, optimizer.v, optimizer.t = opt_entry
                diag = dict(diag, aborted=True, updates=n_updates)
                return params, diag, optimizer
            grad = _flatten_all(g_actor, g_critic, g_ls)
            grad, norm = clip_grad_norm(grad, settings.grad_clip)
            flat = optimizer.step(flat, grad)
            diag["grad_norm"] = norm
            for key in agg:
                agg[key] += diag[key]
            n_updates += 1

    params.actor, params.critic, log_std = _unflatten_all(
        flat, actor_sizes, critic_sizes, params.action_dim)
    params.log_std = log_std
    diagnostics = {key: val / max(n_updates, 1) for key, val in agg.items()}
    diagnostics["aborted"] = False
    diagnostics["updates"] = n_updates
    return params, diagnostics, optimizer
