"""Gaussian policy head, value head, and observation normalization."""

from dataclasses import dataclass, field

import numpy as np

from .nets import init_mlp, mlp_forward, mlp_sizes

LOG_STD_MIN = -5.0  # keeps the action distribution proper
LOG_2PI = np.log(2.0 * np.pi)


class RunningNorm:
    """Per-dimension running mean/variance (Welford batch merge).

    normalize() works from the statistics accumulated so far; callers
    freeze the statistics at evaluation time simply by not calling
    update(). Variance is floored at eps so normalization never divides
    by zero.
    """

    def __init__(self, dim, eps=1e-8):
        self.dim = int(dim)
        self.eps = float(eps)
        self.count = 0.0
        self.mean = np.zeros(self.dim)
        self._m2 = np.zeros(self.dim)

    @property
    def var(self):
        if self.count < 2:
            return np.ones(self.dim)
        return np.maximum(self._m2 / self.count, self.eps)

    def update(self, batch):
        x = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_m2 = ((x - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        self._m2 = self._m2 + b_m2 + delta ** 2 * (self.count * n / total)
        self.count = total

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + self.eps)

    def state(self):
        return {"mean": self.mean.tolist(), "var": self.var.tolist(),
                "count": self.count}

    @classmethod
    def from_state(cls, state):
        norm = cls(len(state["mean"]))
        norm.mean = np.asarray(state["mean"], dtype=np.float64)
        norm.count = float(state["count"])
        # reconstruct the second moment so further updates keep merging
        norm._m2 = np.asarray(state["var"], dtype=np.float64) * max(norm.count, 1.0)
        return norm


@dataclass
class PolicyParams:
    """Actor/critic weights, action log-stds, and observation statistics."""

    actor: list
    critic: list
    log_std: np.ndarray
    norm: RunningNorm

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64).reshape(-1)
        for name, net in (("actor", self.actor), ("critic", self.critic)):
            for w, b in net:
                if not (np.isfinite(w).all() and np.isfinite(b).all()):
                    raise ValueError(f"{name} weights must be finite")
        if not np.isfinite(self.log_std).all():
            raise ValueError("log_std must be finite")
        if self.critic[-1][0].shape[1] != 1:
            raise ValueError("critic must have a single output")
        if self.actor[-1][0].shape[1] != self.log_std.size:
            raise ValueError("actor output width must match log_std length")

    @property
    def action_dim(self):
        return self.log_std.size

    @property
    def actor_sizes(self):
        return mlp_sizes(self.actor)

    @property
    def critic_sizes(self):
        return mlp_sizes(self.critic)

    def copy(self):
        clone = PolicyParams(
            actor=[(w.copy(), b.copy()) for w, b in self.actor],
            critic=[(w.copy(), b.copy()) for w, b in self.critic],
            log_std=self.log_std.copy(),
            norm=RunningNorm.from_state(self.norm.state()),
        )
        clone.norm._m2 = self.norm._m2.copy()
        clone.norm.count = self.norm.count
        clone.norm.mean = self.norm.mean.copy()
        return clone


def init_policy(obs_dim, action_dim, hidden, rng, init_log_std=-0.7):
    """Fresh PolicyParams for the given widths, seeded by rng."""
    hidden = tuple(int(h) for h in hidden)
    return PolicyParams(
        actor=init_mlp((obs_dim, *hidden, action_dim), rng, final_scale=0.01),
        critic=init_mlp((obs_dim, *hidden, 1), rng),
        log_std=np.full(action_dim, float(init_log_std)),
        norm=RunningNorm(obs_dim),
    )


def effective_log_std(log_std):
    return np.maximum(log_std, LOG_STD_MIN)


def gaussian_logprob(mean, log_std, actions):
    """Log-density of each row of actions under N(mean, diag(exp(log_std)^2))."""
    ls = effective_log_std(log_std)
    z = (actions - mean) / np.exp(ls)
    return -0.5 * (z * z).sum(axis=-1) - ls.sum() - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std):
    ls = effective_log_std(log_std)
    return float(ls.sum() + 0.5 * ls.size * (1.0 + LOG_2PI))


def policy_mean(params, obs_normalized):
    return mlp_forward(params.actor, obs_normalized)[0]


def policy_value(params, obs_normalized):
    return mlp_forward(params.critic, obs_normalized)[0][:, 0]


def sample_actions(params, obs_normalized, rng, deterministic=False):
    """(actions, log-probs) for a batch of normalized observations."""
    mean = policy_mean(params, obs_normalized)
    if deterministic:
        return mean, gaussian_logprob(mean, params.log_std, mean)
    std = np.exp(effective_log_std(params.log_std))
    actions = mean + std * rng.standard_normal(mean.shape)
    return actions, gaussian_logprob(mean, params.log_std, actions)
