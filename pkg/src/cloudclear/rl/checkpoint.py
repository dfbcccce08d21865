"""Checkpoint files: flat float64 weights plus a JSON manifest.

weights.bin is the little-endian float64 concatenation of actor weights,
critic weights, and the action log-stds, in flatten_params order. The
manifest records layer sizes, observation-normalization statistics, the
config hash, and a format version, so a checkpoint is self-describing.
"""

import hashlib
import json
import os

import numpy as np

from ..errors import CheckpointError
from .nets import flatten_params, unflatten_params
from .policy import PolicyParams, RunningNorm

FORMAT_VERSION = 1
WEIGHTS_FILE = "weights.bin"
MANIFEST_FILE = "manifest.json"


def config_hash(config_dict):
    """Stable hash of a JSON-serializable config mapping."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_checkpoint(directory, params, *, config_hash="", iteration=0, extra=None):
    os.makedirs(directory, exist_ok=True)
    flat = np.concatenate([flatten_params(params.actor),
                           flatten_params(params.critic),
                           params.log_std])
    manifest = {
        "format_version": FORMAT_VERSION,
        "actor_sizes": list(params.actor_sizes),
        "critic_sizes": list(params.critic_sizes),
        "action_dim": int(params.action_dim),
        "weight_count": int(flat.size),
        "norm": params.norm.state(),
        "config_hash": config_hash,
        "iteration": int(iteration),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(directory, WEIGHTS_FILE), "wb") as fh:
        fh.write(flat.astype("<f8").tobytes())
    with open(os.path.join(directory, MANIFEST_FILE), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_checkpoint(directory):
    """(PolicyParams, manifest) from a checkpoint directory."""
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    weights_path = os.path.join(directory, WEIGHTS_FILE)
    if not os.path.exists(manifest_path) or not os.path.exists(weights_path):
        raise CheckpointError(f"no checkpoint at {directory}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as err:
        raise CheckpointError(f"corrupt manifest at {manifest_path}: {err}") from err
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version!r} "
            f"(this build reads version {FORMAT_VERSION})")

    flat = np.frombuffer(open(weights_path, "rb").read(), dtype="<f8")
    if flat.size != manifest["weight_count"]:
        raise CheckpointError(
            f"weights.bin holds {flat.size} values, manifest promises "
            f"{manifest['weight_count']}")
    actor_sizes = tuple(manifest["actor_sizes"])
    critic_sizes = tuple(manifest["critic_sizes"])
    n_a = sum(i * o + o for i, o in zip(actor_sizes[:-1], actor_sizes[1:]))
    n_c = sum(i * o + o for i, o in zip(critic_sizes[:-1], critic_sizes[1:]))
    action_dim = int(manifest["action_dim"])
    if n_a + n_c + action_dim != flat.size:
        raise CheckpointError("manifest layer sizes do not match the weight count")
    params = PolicyParams(
        actor=unflatten_params(flat[:n_a], actor_sizes),
        critic=unflatten_params(flat[n_a:n_a + n_c], critic_sizes),
        log_std=flat[n_a + n_c:].copy(),
        norm=RunningNorm.from_state(manifest["norm"]),
    )
    return params, manifest
