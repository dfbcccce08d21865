"""Run configuration: nested dataclasses loaded strictly from YAML files.

Every key in a config file must name a real field; a typo fails loudly
with the full dotted path. Sections mirror the library objects they
configure, so a file like

    scenario:
      tree: {recursion_depth: 1, branching_factor: 1}
      n_zoomed: 96
    train:
      num_envs: 128
      iterations: 200

builds the same objects a caller would construct in code. The arm model
is deliberately not file-configurable.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .occlusion import OcclusionParams
from .rl.env import EnvConfig
from .rl.train import TrainConfig
from .sim.lsystem import LSystemParams
from .sim.scenario import ScenarioConfig
from .sim.world import WorldParams


@dataclass(frozen=True)
class EmbeddingConfig:
    """Feature-basis parameters shared by all four cloud slots."""

    num_pairs: int = 8
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_pairs < 1:
            raise ValueError(f"num_pairs must be >= 1, got {self.num_pairs}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class EvalConfig:
    trials: int = 64
    horizon: int = 120
    seed: int = 1000

    def __post_init__(self):
        if self.trials < 1 or self.horizon < 1:
            raise ValueError("trials and horizon must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Top-level bundle: scenario, embedding basis, env, train, eval."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_NESTED = {
    (RunConfig, "scenario"): ScenarioConfig,
    (RunConfig, "embedding"): EmbeddingConfig,
    (RunConfig, "env"): EnvConfig,
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "eval"): EvalConfig,
    (ScenarioConfig, "tree"): LSystemParams,
    (ScenarioConfig, "world"): WorldParams,
    (ScenarioConfig, "occlusion"): OcclusionParams,
}
_BLOCKED = {(ScenarioConfig, "arm")}


def build_dataclass(cls, data, path=""):
    """Instantiate cls from a mapping, rejecting unknown or blocked keys."""
    where = path or cls.__name__
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for name, value in data.items():
        dotted = f"{path}.{name}" if path else name
        if (cls, name) in _BLOCKED:
            raise ConfigError(f"config key {dotted!r} is not file-configurable")
        if name not in fields:
            raise ConfigError(f"unknown config key {dotted!r} (no such field on "
                              f"{cls.__name__})")
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = build_dataclass(nested, value, dotted)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)  # YAML sequences become tuples
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid value under {where}: {err}") from err


def load_config(path) -> RunConfig:
    """Parse a YAML config file into a RunConfig (strict keys)."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{line}: malformed YAML ({err})") from err
    return build_dataclass(RunConfig, data)


def config_to_dict(config) -> dict:
    """A plain-types mirror of a (possibly nested) config dataclass.

    The scenario's arm model is omitted so a saved snapshot stays
    loadable (the arm is never file-configurable).
    """
    out = _plain(dataclasses.asdict(config))
    if isinstance(config, RunConfig):
        out["scenario"].pop("arm", None)
    elif isinstance(config, ScenarioConfig):
        out.pop("arm", None)
    return out


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item") and not isinstance(value, (int, float, str, bool)):
        return value.item()
    return value


def save_config_snapshot(config, path):
    """Write the fully resolved config; byte-stable for identical configs."""
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=True,
                       default_flow_style=False)
