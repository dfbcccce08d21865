"""Feature-build benchmark: batched KME pipeline against the exact Gram oracle.

The headline number gf_t is the time to produce the four global cloud
features (sample each cloud, embed it) for E environments in one control
step. Timings are medians over repeated runs after warmups, on the
monotonic clock; the measured region covers cloud sampling and feature
embedding only, never file I/O or basis construction. The exact
Gram-kernel mean inner product stands in for expensive learned encoders
as the slow baseline, and the report labels it as a substitute.
"""

import time
from contextlib import nullcontext

import numpy as np

from .embedding import embed_cloud, exact_mean_inner, sample_rff_basis
from .sim.lsystem import LSystemParams
from .sim.scenario import ScenarioConfig, make_batch

CLOUD_TAGS = ("whole_branch", "zoomed_branch", "clearance", "robot")

BENCH_SCENARIO = ScenarioConfig(
    tree=LSystemParams(recursion_depth=2, branching_factor=2),
    n_zoomed=128, n_whole_branch=256, n_clearance=64, n_robot=64,
)


def median_time(fn, repetitions, warmups):
    """Median wall time of fn() over the given repetitions (after warmups)."""
    if repetitions < 1 or warmups < 0:
        raise ValueError("need repetitions >= 1 and warmups >= 0")
    for _ in range(warmups):
        fn()
    samples = np.empty(repetitions)
    for i in range(repetitions):
        start = time.perf_counter()
        fn()
        samples[i] = time.perf_counter() - start
    return float(np.median(samples))


def build_global_features(world, n_points, basis):
    """The measured kernel: 4 cloud samples + embeddings per environment.

    An empty zoomed crop embeds to the zero vector, matching the
    observation pipeline.
    """
    out = np.empty((world.E, len(CLOUD_TAGS), basis.output_dim))
    for i in range(world.E):
        for j, tag in enumerate(CLOUD_TAGS):
            pts = world.sample_cloud(tag, n_points, i)
            if pts.shape[0] == 0:
                out[i, j] = 0.0
            else:
                out[i, j] = embed_cloud(pts, basis).values
    return out


def _threads_context(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(threads))


def bench_report(env_counts=(1, 8), cloud_size=512, num_pairs=8,
                 repetitions=20, warmups=3, seed=0,
                 sweep=(512, 1024, 2048, 4096, 8192), threads=None):
    """Full benchmark report as a JSON-ready dict.

    Enforces the report contract: at least 20 repetitions after at least
    3 warmups. threads=1 pins the BLAS pools for stable timings.
    """
    if repetitions < 20 or warmups < 3:
        raise ValueError("report protocol requires >= 20 repetitions "
                         "and >= 3 warmups")
    if cloud_size < 1 or num_pairs < 1:
        raise ValueError("cloud_size and num_pairs must be >= 1")
    env_counts = tuple(int(e) for e in env_counts)
    if not env_counts or any(e < 1 for e in env_counts):
        raise ValueError("env_counts must be positive")

    basis = sample_rff_basis(num_pairs=num_pairs, gamma=1.0, seed=seed)
    rng = np.random.default_rng(seed)

    with _threads_context(threads):
        gf_t = {}
        for count in env_counts:
            world = make_batch(BENCH_SCENARIO, (seed, count), count)
            median = median_time(
                lambda: build_global_features(world, cloud_size, basis),
                repetitions, warmups)
            gf_t[str(count)] = {"median_s": median,
                                "per_env_s": median / count}

        # pairwise-similarity task on fixed clouds: embed+dot vs Gram sum
        p = rng.random((cloud_size, 3))
        q = rng.random((cloud_size, 3))
        kme_pair_s = median_time(
            lambda: embed_cloud(p, basis).values @ embed_cloud(q, basis).values,
            repetitions, warmups)
        gram_s = median_time(
            lambda: exact_mean_inner(p, q, gamma=1.0),
            repetitions, warmups)

        scaling = []
        for n in sweep:
            cloud = rng.random((int(n), 3))
            scaling.append({
                "n": int(n),
                "kme_s": median_time(lambda c=cloud: embed_cloud(c, basis),
                                     repetitions, warmups),
            })

    single = gf_t.get("1")
    report = {
        "protocol": {
            "repetitions": repetitions,
            "warmups": warmups,
            "clock": "time.perf_counter (monotonic)",
            "measured_region": ("cloud sampling + feature embedding; "
                                "excludes file I/O and basis construction"),
            "threads": "default" if threads is None else int(threads),
        },
        "feature_width": int(basis.output_dim),
        "cloud_size": int(cloud_size),
        "env_counts": list(env_counts),
        "gf_t": gf_t,
        "gf_t_single_s": None if single is None else single["median_s"],
        "gram_baseline": {
            "n": int(cloud_size),
            "median_s": gram_s,
            "kme_pair_median_s": kme_pair_s,
            "note": ("exact Gram-kernel mean inner product; substitutes for "
                     "expensive learned-encoder baselines, which are out of "
                     "scope here"),
        },
        "kme_speedup_vs_gram": gram_s / kme_pair_s,
        "scaling": scaling,
    }
    if len(scaling) >= 2:
        report["scaling_ratio"] = {
            "n_hi": scaling[-1]["n"],
            "n_lo": scaling[0]["n"],
            "ratio": scaling[-1]["kme_s"] / scaling[0]["kme_s"],
        }
    return report


def format_bench_table(report) -> str:
    """Human-readable summary of a bench report."""
    lines = [
        f"feature width {report['feature_width']}, cloud size "
        f"{report['cloud_size']}, medians over "
        f"{report['protocol']['repetitions']} reps "
        f"({report['protocol']['warmups']} warmups), threads: "
        f"{report['protocol']['threads']}",
        "",
        "envs | gf_t median (s) | per env (s)",
    ]
    for count in report["env_counts"]:
        row = report["gf_t"][str(count)]
        lines.append(f"{count:>4} | {row['median_s']:.6f}        | "
                     f"{row['per_env_s']:.6f}")
    gram = report["gram_baseline"]
    lines += [
        "",
        f"pair similarity at N={gram['n']}: KME {gram['kme_pair_median_s']:.6f} s"
        f" vs Gram oracle {gram['median_s']:.6f} s "
        f"(speedup {report['kme_speedup_vs_gram']:.1f}x)",
        f"note: {gram['note']}",
        "",
        "N     | embed median (s)",
    ]
    for row in report["scaling"]:
        lines.append(f"{row['n']:>5} | {row['kme_s']:.6f}")
    if "scaling_ratio" in report:
        sr = report["scaling_ratio"]
        lines.append(f"scaling ratio time({sr['n_hi']})/time({sr['n_lo']}) = "
                     f"{sr['ratio']:.2f}")
    return "\n".join(lines)
