"""Environment batching, rollout collection, training loop, checkpoints."""

import dataclasses
import json
import os

import numpy as np
import pytest

from cloudclear.embedding import sample_rff_basis
from cloudclear.errors import CheckpointError
from cloudclear.observation import clearance_reward, total_reward
from cloudclear.rl.checkpoint import load_checkpoint, save_checkpoint
from cloudclear.rl.env import ClearanceEnv, EnvConfig, rollout
from cloudclear.rl.evaluate import REPORT_COLUMNS, evaluate, format_report
from cloudclear.rl.policy import init_policy
from cloudclear.rl.train import TrainConfig, train
from cloudclear.sim.lsystem import LSystemParams
from cloudclear.sim.scenario import ScenarioConfig
from cloudclear.sim.world import WorldParams

BASIS = sample_rff_basis(num_pairs=8, gamma=1.0, seed=0)

SCEN = ScenarioConfig(
    tree=LSystemParams(recursion_depth=1, branching_factor=1),
    n_zoomed=64, n_whole_branch=96, n_clearance=32, n_robot=48,
)
TRAIN_SCEN = dataclasses.replace(SCEN, world=WorldParams(training_mode=True))
ENVC = EnvConfig(n_whole_branch=96, n_zoomed=64, n_clearance=32, n_robot=48)


def make_env(num_envs=2, scen=SCEN, config=ENVC):
    return ClearanceEnv(scen, num_envs, config, bases=BASIS)


def zero_policy():
    params = init_policy(88, 6, (8,), np.random.default_rng(0))
    params.actor = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.actor]
    return params


# -- environment --------------------------------------------------------------

def test_reset_is_seed_deterministic():
    a = make_env().reset(11)
    b = make_env().reset(11)
    for oa, ob in zip(a, b):
        assert np.array_equal(oa.vector, ob.vector)
    c = make_env().reset(12)
    assert not np.array_equal(a[0].vector, c[0].vector)


def test_reset_envs_independent_of_batch_size():
    small = make_env(num_envs=2).reset(21)
    large = make_env(num_envs=4).reset(21)
    for i in range(2):
        assert np.array_equal(small[i].vector, large[i].vector)


def test_noise_config_is_deterministic_too():
    noisy = dataclasses.replace(ENVC, noise_d_max=0.02, noise_fraction=0.7)
    a = make_env(config=noisy).reset(31)
    b = make_env(config=noisy).reset(31)
    for oa, ob in zip(a, b):
        assert np.array_equal(oa.vector, ob.vector)
    clean = make_env().reset(31)
    assert not np.array_equal(a[0].vector, clean[0].vector)


def test_step_rewards_recompose():
    env = make_env()
    env.reset(41)
    rng = np.random.default_rng(0)
    for _ in range(3):
        obs, rewards, dones, info = env.step(rng.normal(0, 0.5, size=(2, 6)))
        for i, o in enumerate(obs):
            expect = total_reward(o.occ_h, o.qdot, bool(o.safety_breach))
            assert rewards[i] == expect.total
            assert info["h"][i] == o.occ_h
        assert not dones.any()


def test_step_requires_reset():
    env = make_env()
    with pytest.raises(RuntimeError, match="reset"):
        env.step(np.zeros((2, 6)))


def test_env_validation():
    with pytest.raises(ValueError, match="num_envs"):
        ClearanceEnv(SCEN, 0, ENVC, bases=BASIS)
    with pytest.raises(ValueError, match="bases"):
        ClearanceEnv(SCEN, 2, ENVC)
    with pytest.raises(ValueError, match="n_zoomed"):
        EnvConfig(n_zoomed=0)
    with pytest.raises(ValueError, match="noise_d_max"):
        EnvConfig(noise_d_max=-0.1)
    assert EnvConfig(noise_d_max=0.0).noise is None
    assert EnvConfig(noise_d_max=0.01).noise == (0.01, 0.5)


def test_episode_metrics_cover_all_envs():
    env = make_env(num_envs=3)
    env.reset(51)
    for _ in range(4):
        env.step(np.zeros((3, 6)))
    metrics = env.episode_metrics()
    assert len(metrics) == 3
    for m in metrics:
        assert 0.0 <= m.touch_pct <= 100.0


# -- rollout ------------------------------------------------------------------

def test_rollout_shapes_and_determinism():
    def run():
        env = make_env(num_envs=3)
        params = init_policy(88, 6, (8,), np.random.default_rng(1))
        return rollout(env, params, 5, np.random.default_rng(2), reset_seed=61)

    t1, t2 = run(), run()
    assert t1.obs.shape == (3, 5, 88)
    assert t1.actions.shape == (3, 5, 6)
    assert t1.values.shape == (3, 6)
    assert np.array_equal(t1.obs, t2.obs)
    assert np.array_equal(t1.actions, t2.actions)
    assert np.array_equal(t1.logprobs, t2.logprobs)
    assert np.array_equal(t1.rewards, t2.rewards)
    assert len(t1.metrics) == 3


def test_zero_action_rollout_reward_decomposition():
    env = make_env(num_envs=2)
    traj = rollout(env, zero_policy(), 6, np.random.default_rng(0),
                   reset_seed=71, deterministic=True)
    assert np.all(traj.actions == 0.0)
    # commanded velocity zero means r_q = 0 exactly: reward is r_h + r_sm
    for e in range(2):
        for t in range(6):
            expect = (clearance_reward(traj.h[e, t])
                      + (0.0 if traj.breach[e, t] else 0.4))
            assert abs(traj.rewards[e, t] - expect) < 1e-12


def test_divergence_resets_one_env_and_isolates_the_rest():
    def hook(world, t):
        if t == 2:
            world.omega[0] = np.inf

    params = zero_policy()
    with np.errstate(invalid="ignore", over="ignore"):
        env = make_env(num_envs=2)
        bad = rollout(env, params, 6, np.random.default_rng(3),
                      reset_seed=81, deterministic=True, on_step=hook)
    clean_env = make_env(num_envs=2)
    clean = rollout(clean_env, params, 6, np.random.default_rng(3),
                    reset_seed=81, deterministic=True)

    assert bad.diverged_steps == 1
    assert bad.dones[0, 2]
    assert not bad.dones[1].any()
    assert np.isfinite(bad.rewards).all()
    assert np.isfinite(bad.obs).all()
    # env 1 never notices: its whole trace matches the clean run bitwise
    assert np.array_equal(bad.obs[1], clean.obs[1])
    assert np.array_equal(bad.rewards[1], clean.rewards[1])
    # env 0 got a fresh scenario mid-episode
    assert not np.array_equal(bad.obs[0, 3], clean.obs[0, 3])


def test_rollout_validation():
    env = make_env()
    params = zero_policy()
    with pytest.raises(ValueError, match="horizon"):
        rollout(env, params, 0, np.random.default_rng(0), reset_seed=1)


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip_is_exact(tmp_path):
    params = init_policy(88, 6, (16, 16), np.random.default_rng(5))
    params.norm.update(np.random.default_rng(6).standard_normal((40, 88)))
    manifest = save_checkpoint(tmp_path / "ck", params,
                               config_hash="abc123", iteration=7)
    assert manifest["format_version"] == 1
    loaded, meta = load_checkpoint(tmp_path / "ck")
    for (w1, b1), (w2, b2) in zip(params.actor, loaded.actor):
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)
    for (w1, b1), (w2, b2) in zip(params.critic, loaded.critic):
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)
    assert np.array_equal(params.log_std, loaded.log_std)
    assert np.allclose(loaded.norm.mean, params.norm.mean, atol=0)
    assert np.allclose(loaded.norm.var, params.norm.var, rtol=1e-15)
    assert meta["iteration"] == 7 and meta["config_hash"] == "abc123"


def test_checkpoint_error_paths(tmp_path):
    params = init_policy(8, 2, (4,), np.random.default_rng(0))
    with pytest.raises(CheckpointError, match="no checkpoint"):
        load_checkpoint(tmp_path / "missing")

    save_checkpoint(tmp_path / "trunc", params)
    weights = tmp_path / "trunc" / "weights.bin"
    weights.write_bytes(weights.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="weights.bin holds"):
        load_checkpoint(tmp_path / "trunc")

    save_checkpoint(tmp_path / "vers", params)
    manifest = tmp_path / "vers" / "manifest.json"
    data = json.loads(manifest.read_text())
    data["format_version"] = 99
    manifest.write_text(json.dumps(data))
    with pytest.raises(CheckpointError, match="format version"):
        load_checkpoint(tmp_path / "vers")

    save_checkpoint(tmp_path / "bad", params)
    (tmp_path / "bad" / "manifest.json").write_text("{not json")
    with pytest.raises(CheckpointError, match="corrupt manifest"):
        load_checkpoint(tmp_path / "bad")


# -- training loop ------------------------------------------------------------

SMOKE = TrainConfig(num_envs=2, horizon=4, iterations=2, hidden=(8, 8),
                    minibatch_size=4, checkpoint_every=1, seed=3)


def test_train_smoke_writes_metrics_and_checkpoints(tmp_path):
    env = make_env(scen=TRAIN_SCEN)
    params, records = train(SMOKE, env, tmp_path)
    assert len(records) == 2
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["iteration"] == 0
    for key in ("train_reward", "mean_h", "policy_loss", "value_loss",
                "clip_fraction", "approx_kl", "success_rate_pct"):
        assert key in rec
    assert "time" not in rec and "timestamp" not in rec
    assert (tmp_path / "checkpoints" / "final" / "weights.bin").exists()
    assert (tmp_path / "checkpoints" / "iter_000001" / "manifest.json").exists()


def test_train_is_bit_reproducible():
    _, r1 = train(SMOKE, make_env(scen=TRAIN_SCEN), None)
    _, r2 = train(SMOKE, make_env(scen=TRAIN_SCEN), None)
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_train_resume_continues_iteration_count(tmp_path):
    env = make_env(scen=TRAIN_SCEN)
    train(SMOKE, env, tmp_path)
    longer = dataclasses.replace(SMOKE, iterations=4)
    env2 = make_env(scen=TRAIN_SCEN)
    _, records = train(longer, env2, tmp_path, resume=True)
    assert [r["iteration"] for r in records] == [2, 3]
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["iteration"] for l in lines] == [0, 1, 2, 3]


def test_train_env_count_mismatch():
    env = make_env(num_envs=3, scen=TRAIN_SCEN)
    with pytest.raises(ValueError, match="envs"):
        train(SMOKE, env, None)


def test_train_config_validation():
    with pytest.raises(ValueError, match="beta"):
        TrainConfig(beta=1.0)
    with pytest.raises(ValueError, match="gae_lambda"):
        TrainConfig(gae_lambda=-0.1)
    with pytest.raises(ValueError, match="horizon"):
        TrainConfig(horizon=0)
    with pytest.raises(ValueError, match="iterations"):
        TrainConfig(iterations=0)


# -- evaluation ---------------------------------------------------------------

def test_evaluate_rejects_training_mode_env():
    env = make_env(scen=TRAIN_SCEN)
    with pytest.raises(ValueError, match="full contact"):
        evaluate(zero_policy(), env, trials=2, horizon=2, seed=1)


def test_evaluate_report_schema_and_determinism():
    env = make_env(num_envs=2)
    r1 = evaluate(zero_policy(), env, trials=3, horizon=4, seed=5)
    r2 = evaluate(zero_policy(), make_env(num_envs=2), trials=3, horizon=4, seed=5)
    assert tuple(r1.keys()) == REPORT_COLUMNS
    assert r1["Trials"] == 3
    assert r1 == r2
    table = format_report(r1)
    assert "Test SR %" in table and "Steps in Succ" in table


def test_evaluate_random_policy_runs():
    env = make_env(num_envs=2)
    report = evaluate(None, env, trials=2, horizon=3, seed=9,
                      random_policy=True)
    assert report["Trials"] == 2
    assert np.isfinite(report["Test Rew"]["mean"])


def test_scripted_oracle_clears_every_scenario():
    def teleport(world, t):
        world.base_pos[:, 2] = 100.0  # branch far from line and arm

    env = make_env(num_envs=2)
    report = evaluate(zero_policy(), env, trials=2, horizon=12, seed=13,
                      on_step=teleport)
    assert report["Test SR %"]["mean"] == 100.0
    # success onset is the first step, so every step counts
    assert report["Steps in Succ"]["mean"] == 12.0
    assert report["Occ Drop %"]["mean"] == 0.0  # h already 0 at the first update
