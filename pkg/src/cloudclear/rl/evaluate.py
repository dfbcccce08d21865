"""Evaluation runs: full-contact scenarios, deterministic policy, report table."""

import numpy as np

from .policy import policy_mean

REPORT_COLUMNS = ("Trials", "Test Rew", "Test SR %", "Occ Drop %",
                  "Touch %", "Steps in Succ")


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def evaluate(params, env, *, trials, horizon, seed, random_policy=False,
             on_step=None):
    """Aggregate episode metrics over unseen evaluation scenarios.

    env must run the full contact model (training-mode masking off); this
    is checked, not assumed. Actions are the deterministic policy mean
    (observation statistics frozen), or uniform random joint-velocity
    commands when random_policy is set. Scenario batches are seeded from
    (seed, batch index), so a given seed and env batch size reproduce the
    report exactly. on_step(world, t) runs before each physics step.

    Returns a dict with the metric columns as keys; every column except
    Trials carries across-env mean and standard deviation.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")

    metrics = []
    batch_index = 0
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xA5)))
    while len(metrics) < trials:
        reset_ss = np.random.SeedSequence(entropy=(int(seed), int(batch_index)))
        observations = env.reset(reset_ss)
        if env.training_mode:
            raise ValueError(
                "evaluation requires the full contact model; the env was "
                "built with training-mode masking enabled")
        obs_mat = np.stack([o.vector for o in observations])
        for t in range(horizon):
            if random_policy:
                limit = env.world.arm.velocity_limit
                actions = rng.uniform(-limit, limit, size=(env.num_envs, 6))
            else:
                actions = policy_mean(params, params.norm.normalize(obs_mat))
            if on_step is not None:
                on_step(env.world, t)
            observations, _, _, _ = env.step(actions)
            obs_mat = np.stack([o.vector for o in observations])
        metrics.extend(env.episode_metrics())
        batch_index += 1
    metrics = metrics[:trials]

    return {
        "Trials": len(metrics),
        "Test Rew": _mean_std([m.cumulative_reward for m in metrics]),
        "Test SR %": _mean_std([100.0 * m.success for m in metrics]),
        "Occ Drop %": _mean_std([m.occ_drop_pct for m in metrics]),
        "Touch %": _mean_std([m.touch_pct for m in metrics]),
        "Steps in Succ": _mean_std([m.steps_in_success for m in metrics]),
    }


def format_report(report):
    """The report as an aligned two-row text table."""
    cells = []
    for col in REPORT_COLUMNS:
        val = report[col]
        if isinstance(val, dict):
            cells.append(f"{val['mean']:.2f} ± {val['std']:.2f}")
        else:
            cells.append(str(val))
    widths = [max(len(c), len(h)) for c, h in zip(cells, REPORT_COLUMNS)]
    header = " | ".join(h.ljust(w) for h, w in zip(REPORT_COLUMNS, widths))
    row = " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join((header, rule, row))
