"""Command-line entry point.

Subcommands: embed, occlusion, gen-tree, train, eval, bench. Every
subcommand accepts --seed, --config, and --output; unknown flags abort
with a usage error. File-producing commands are byte-stable for
identical inputs and seeds (the bench report carries measured timings
and is exempt by nature). Errors exit nonzero with a diagnostic on
stderr; malformed input files include the offending line number.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .bench import bench_report, format_bench_table
from .config import RunConfig, load_config, save_config_snapshot
from .embedding import embed_cloud, sample_rff_basis
from .errors import CloudClearError
from .io import read_cloud_file
from .occlusion import nearest_pair_distances
from .rl.checkpoint import load_checkpoint
from .rl.env import ClearanceEnv
from .rl.evaluate import evaluate, format_report
from .rl.train import train
from .sim.lsystem import generate_tree


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's seed for this command")
    parser.add_argument("--config", default=None,
                        help="YAML config file (defaults apply when omitted)")
    parser.add_argument("--output", default=None,
                        help="output file or directory (stdout where sensible)")


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_config(args.config)


def _emit(text, output):
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w") as fh:
            fh.write(text)


def _float_line(x):
    return repr(float(x))


def cmd_embed(args):
    cfg = _load(args)
    emb = cfg.embedding
    seed = emb.seed if args.seed is None else args.seed
    points = read_cloud_file(args.cloud)
    basis = sample_rff_basis(num_pairs=emb.num_pairs, gamma=emb.gamma, seed=seed)
    values = embed_cloud(points, basis).values
    _emit("".join(_float_line(v) + "\n" for v in values), args.output)
    return 0


def cmd_occlusion(args):
    cfg = _load(args)
    occ = cfg.scenario.occlusion
    cloud1 = read_cloud_file(args.cloud1)
    cloud2 = read_cloud_file(args.cloud2)
    pairs = nearest_pair_distances(cloud1, cloud2, occ.k_pairs)
    breaches = int((pairs.distances < occ.d_th).sum())
    h = breaches / pairs.effective_k
    text = (f"h {_float_line(h)}\n"
            f"breaches {breaches}\n"
            f"pairs {pairs.effective_k}\n"
            f"d_th {_float_line(occ.d_th)}\n")
    _emit(text, args.output)
    return 0


def cmd_gen_tree(args):
    cfg = _load(args)
    seed = 0 if args.seed is None else args.seed
    tree = generate_tree(cfg.scenario.tree, seed)
    data = {name: getattr(tree, name).tolist()
            for name in ("parent", "depth", "rest_rotation_local", "length",
                         "radius", "mass", "stiffness", "damping", "inertia")}
    data["num_links"] = int(tree.num_links)
    data["seed"] = int(seed)
    _emit(json.dumps(data, sort_keys=True, indent=2) + "\n", args.output)
    return 0


def _make_env(cfg, num_envs, *, force_full_contact=False):
    scenario = cfg.scenario
    if force_full_contact and scenario.world.training_mode:
        scenario = dataclasses.replace(
            scenario, world=dataclasses.replace(scenario.world,
                                                training_mode=False))
    basis = sample_rff_basis(num_pairs=cfg.embedding.num_pairs,
                             gamma=cfg.embedding.gamma,
                             seed=cfg.embedding.seed)
    return ClearanceEnv(scenario, num_envs, cfg.env, bases=basis,
                        occlusion=scenario.occlusion)


def cmd_train(args):
    cfg = _load(args)
    if args.output is None:
        raise CloudClearError("train needs --output RUN_DIR for its artifacts")
    train_cfg = cfg.train
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    os.makedirs(args.output, exist_ok=True)
    save_config_snapshot(
        dataclasses.replace(cfg, train=train_cfg),
        os.path.join(args.output, "config.yaml"))
    env = _make_env(cfg, train_cfg.num_envs)

    def progress(record):
        sys.stderr.write(
            f"iter {record['iteration']:4d}  reward {record['train_reward']:8.3f}"
            f"  mean_h {record['mean_h']:.3f}  clip {record['clip_fraction']:.3f}\n")

    _, records = train(train_cfg, env, args.output, resume=args.resume,
                       log_fn=progress)
    done = records[-1]["iteration"] if records else "none (already complete)"
    sys.stdout.write(f"trained through iteration {done}; artifacts in "
                     f"{args.output}\n")
    return 0


def cmd_eval(args):
    cfg = _load(args)
    params, _ = load_checkpoint(args.checkpoint)
    seed = cfg.eval.seed if args.seed is None else args.seed
    env = _make_env(cfg, cfg.train.num_envs, force_full_contact=True)
    report = {"policy": evaluate(params, env, trials=cfg.eval.trials,
                                 horizon=cfg.eval.horizon, seed=seed)}
    sys.stdout.write(format_report(report["policy"]) + "\n")
    if args.baseline:
        report["random_baseline"] = evaluate(
            None, env, trials=cfg.eval.trials, horizon=cfg.eval.horizon,
            seed=seed, random_policy=True)
        sys.stdout.write("\nrandom baseline:\n"
                         + format_report(report["random_baseline"]) + "\n")
    if args.output is not None:
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_bench(args):
    cfg = _load(args)
    seed = 0 if args.seed is None else args.seed
    env_counts = tuple(int(tok) for tok in args.env_counts.split(","))
    report = bench_report(env_counts=env_counts, cloud_size=args.cloud_size,
                          num_pairs=cfg.embedding.num_pairs,
                          repetitions=args.reps, warmups=args.warmups,
                          seed=seed, threads=args.threads)
    sys.stdout.write(format_bench_table(report) + "\n")
    if args.output is not None:
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cloudclear",
        description="Point-cloud kernel features, occlusion scoring, and the "
                    "branch-clearance trainer")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a cloud file into the feature space")
    p.add_argument("cloud", help="PLY or CSV cloud file")
    _add_common(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("occlusion", help="occlusion score between two clouds")
    p.add_argument("cloud1")
    p.add_argument("cloud2")
    _add_common(p)
    p.set_defaults(fn=cmd_occlusion)

    p = sub.add_parser("gen-tree", help="generate a deterministic tree model")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_tree)

    p = sub.add_parser("train", help="run the training loop")
    _add_common(p)
    p.add_argument("--resume", action="store_true",
                   help="continue from the newest checkpoint in --output")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on unseen scenarios")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint directory (weights.bin + manifest.json)")
    p.add_argument("--baseline", action="store_true",
                   help="also report a random-policy baseline")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="feature-build efficiency benchmark")
    p.add_argument("--env-counts", default="1,8",
                   help="comma-separated batch sizes (default 1,8)")
    p.add_argument("--cloud-size", type=int, default=512)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--warmups", type=int, default=3)
    p.add_argument("--threads", type=int, default=None,
                   help="pin BLAS pools (1 = single-threaded, for stable timing)")
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CloudClearError, ValueError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
