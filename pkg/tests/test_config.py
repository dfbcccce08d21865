"""Strict YAML config loading and byte-stable snapshots."""

import dataclasses

import pytest

from cloudclear.config import (
    EmbeddingConfig,
    EvalConfig,
    RunConfig,
    build_dataclass,
    config_to_dict,
    load_config,
    save_config_snapshot,
)
from cloudclear.errors import ConfigError


def test_empty_mapping_gives_defaults():
    cfg = build_dataclass(RunConfig, {})
    assert config_to_dict(cfg) == config_to_dict(RunConfig())


def test_nested_values_apply():
    cfg = build_dataclass(RunConfig, {
        "scenario": {"tree": {"recursion_depth": 1, "branching_factor": 1},
                     "n_zoomed": 96},
        "train": {"num_envs": 128, "iterations": 200, "hidden": [64, 64]},
        "embedding": {"num_pairs": 4},
    })
    assert cfg.scenario.tree.recursion_depth == 1
    assert cfg.scenario.n_zoomed == 96
    assert cfg.train.num_envs == 128
    assert cfg.train.hidden == (64, 64)  # YAML list arrives as tuple
    assert cfg.embedding.num_pairs == 4
    # untouched sections keep their defaults
    assert cfg.eval == EvalConfig()


def test_unknown_key_names_dotted_path():
    with pytest.raises(ConfigError, match="train.learning_rte"):
        build_dataclass(RunConfig, {"train": {"learning_rte": 0.1}})
    with pytest.raises(ConfigError, match="scenario.tree.depht"):
        build_dataclass(RunConfig, {"scenario": {"tree": {"depht": 2}}})
    with pytest.raises(ConfigError, match="trian"):
        build_dataclass(RunConfig, {"trian": {}})


def test_arm_is_not_file_configurable():
    with pytest.raises(ConfigError, match="not file-configurable"):
        build_dataclass(RunConfig, {"scenario": {"arm": {}}})


def test_invalid_value_reports_section():
    with pytest.raises(ConfigError, match="train"):
        build_dataclass(RunConfig, {"train": {"beta": 2.0}})
    with pytest.raises(ConfigError, match="embedding"):
        build_dataclass(RunConfig, {"embedding": {"gamma": -1.0}})


def test_section_must_be_mapping():
    with pytest.raises(ConfigError, match="mapping"):
        build_dataclass(RunConfig, {"train": 5})


def test_null_section_means_defaults():
    cfg = build_dataclass(RunConfig, {"train": None})
    assert cfg.train == RunConfig().train


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        "scenario:\n"
        "  tree: {recursion_depth: 1, branching_factor: 1}\n"
        "  stiffness_scale_range: [0.9, 1.1]\n"
        "train:\n"
        "  num_envs: 4\n"
        "  seed: 7\n")
    cfg = load_config(path)
    assert cfg.scenario.stiffness_scale_range == (0.9, 1.1)
    assert cfg.train.seed == 7


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")


def test_load_config_malformed_yaml_names_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("train:\n  num_envs: 4\n seed: [unclosed\n")
    with pytest.raises(ConfigError, match=r"bad\.yaml:\d"):
        load_config(path)


def test_snapshot_roundtrip_and_byte_stability(tmp_path):
    cfg = build_dataclass(RunConfig, {
        "scenario": {"tree": {"recursion_depth": 2}},
        "train": {"num_envs": 16, "hidden": [32, 32]},
    })
    p1, p2 = tmp_path / "a.yaml", tmp_path / "b.yaml"
    save_config_snapshot(cfg, p1)
    save_config_snapshot(cfg, p2)
    assert p1.read_bytes() == p2.read_bytes()
    again = load_config(p1)
    assert config_to_dict(again) == config_to_dict(cfg)


def test_config_to_dict_omits_arm():
    d = config_to_dict(RunConfig())
    assert "arm" not in d["scenario"]
    assert d["train"]["hidden"] == [256, 256]


def test_embedding_and_eval_validation():
    with pytest.raises(ValueError):
        EmbeddingConfig(num_pairs=0)
    with pytest.raises(ValueError):
        EmbeddingConfig(gamma=0.0)
    with pytest.raises(ValueError):
        EvalConfig(trials=0)
    with pytest.raises(ValueError):
        EvalConfig(horizon=0)


def test_repo_configs_load():
    import glob
    import os
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    paths = sorted(glob.glob(os.path.join(root, "*.yaml")))
    assert paths, "configs/ directory should ship at least one YAML"
    for path in paths:
        cfg = load_config(path)
        assert isinstance(cfg, RunConfig)
