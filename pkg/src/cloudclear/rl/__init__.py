"""On-policy training over batched clearance environments."""

from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .env import ClearanceEnv, EnvConfig, Trajectory, rollout
from .evaluate import REPORT_COLUMNS, evaluate, format_report
from .gae import gae_advantages
from .nets import (
    Adam,
    clip_grad_norm,
    flatten_params,
    init_mlp,
    mlp_backward,
    mlp_forward,
    unflatten_params,
)
from .policy import (
    LOG_STD_MIN,
    PolicyParams,
    RunningNorm,
    gaussian_entropy,
    gaussian_logprob,
    init_policy,
    policy_mean,
    policy_value,
    sample_actions,
)
from .ppo import PpoSettings, normalize_advantages, ppo_loss_and_grads, ppo_update
from .train import TrainConfig, train
