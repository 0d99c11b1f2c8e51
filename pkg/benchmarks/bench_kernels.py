"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv] [--train-episodes 20]

Each kernel is timed on identical inputs under both backends and the outputs
are checked for agreement. ``--train-episodes`` also times a short PPO skill
run end to end in two subprocesses, one with ``HYBRID_MANIP_PURE=1``.
"""

from __future__ import annotations

import argparse
import csv
import os
import subprocess
import sys
import timeit

import numpy as np

from hybrid_manip import _pykernels
from hybrid_manip.kernels import compiled_module


def cases(rng: np.random.Generator) -> dict:
    n = 2048
    sizes = (12, 64, 64, 3)
    weights = [rng.normal(size=(o, i)) / np.sqrt(i) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(size=o) * 0.1 for o in sizes[1:]]
    gae_args = (rng.normal(size=n), rng.normal(size=n), (rng.random(n) < 0.02).astype(float), 0.3, 0.99, 0.95)
    x, mean, log_std = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.3
    return {
        "gae[2048]": ("gae", gae_args, 20),
        "mlp_forward_vec[12-64-64-3]": ("mlp_forward_vec", (weights, biases, rng.normal(size=12)), 2000),
        "gaussian_log_prob[3]": ("gaussian_log_prob", (x, mean, log_std), 5000),
    }


def _max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_diff(u, v) for u, v in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def time_kernels(repeat: int, seed: int) -> list[dict]:
    compiled = compiled_module()
    backends = {"python": _pykernels}
    if compiled is not None:
        backends["cython"] = compiled
    rows = []
    for label, (fn_name, args, number) in cases(np.random.default_rng(seed)).items():
        outputs, best = {}, {}
        for name, mod in backends.items():
            fn = getattr(mod, fn_name)
            outputs[name] = fn(*args)
            best[name] = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number
        row = {"kernel": label, "python_us": 1e6 * best["python"]}
        if "cython" in best:
            row["cython_us"] = 1e6 * best["cython"]
            row["speedup"] = best["python"] / best["cython"]
            row["max_abs_diff"] = _max_diff(outputs["python"], outputs["cython"])
        rows.append(row)
    return rows


TRAIN_SNIPPET = (
    "import time; from hybrid_manip.rl.train import train_skill; from hybrid_manip.kernels import BACKEND;"
    "t = time.perf_counter(); train_skill(None, 'reach', 'ppo', {episodes}, 0);"
    "print(BACKEND, time.perf_counter() - t)"
)


def time_training(episodes: int) -> list[tuple[str, float]]:
    results = []
    for pure in ("0", "1"):
        env = dict(os.environ, HYBRID_MANIP_PURE=pure)
        out = subprocess.run(
            [sys.executable, "-c", TRAIN_SNIPPET.format(episodes=episodes)],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        results.append((out[0], float(out[1])))
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description="Benchmark compiled vs numpy kernels.")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", metavar="PATH", help="also write the kernel table as CSV")
    parser.add_argument("--train-episodes", type=int, default=0, help="time a PPO reach run per backend")
    args = parser.parse_args()

    rows = time_kernels(args.repeat, args.seed)
    if "cython_us" not in rows[0]:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'kernel':<30}{'python us':>12}{'cython us':>12}{'speedup':>10}{'max diff':>12}")
    for r in rows:
        print(
            f"{r['kernel']:<30}{r['python_us']:>12.2f}{r.get('cython_us', float('nan')):>12.2f}"
            f"{r.get('speedup', float('nan')):>10.1f}{r.get('max_abs_diff', float('nan')):>12.1e}"
        )
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["kernel", "python_us", "cython_us", "speedup", "max_abs_diff"])
            writer.writeheader()
            writer.writerows(rows)
    if args.train_episodes:
        for backend, seconds in time_training(args.train_episodes):
            print(f"ppo reach x{args.train_episodes} episodes [{backend}]: {seconds:.2f} s")


if __name__ == "__main__":
    main()
