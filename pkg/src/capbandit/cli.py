"""Command-line interface.

Subcommands:
  run     execute an experiment config and write the results CSV
  oracle  one-shot exact allocation for a reward matrix and constraint files
  bench   timing harness for the exact solver and the ALS estimator
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .allocation import solve_exact
from .config import ConfigError, parse_config
from .datasets import RatingsParseError
from .lowrank import als_least_squares
from .model import ConstraintProfile, Hyperparams, ObservationLog
from .runner import resolve_output_path, run_experiment, write_csv


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.seeds is not None:
        cfg.n_seeds = args.seeds
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.output_path = args.out
    records = run_experiment(cfg)
    out = resolve_output_path(cfg.output_path)
    write_csv(records, out)
    print(f"wrote {len(records)} records to {out}")
    return 0


def _load_vector(path):
    vec = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=1)
    return vec.reshape(-1)


def _cmd_oracle(args):
    theta = np.loadtxt(args.theta, delimiter=",", ndmin=2)
    profile = ConstraintProfile(capacities=_load_vector(args.capacities),
                                demands=_load_vector(args.demands))
    x, value = solve_exact(theta, profile)
    for row in x:
        print(",".join(str(int(v)) for v in row))
    print(f"value: {value:.9g}")
    return 0


def _cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    n, m = args.n_users, args.n_items
    print(f"bench: {args.reps} reps at {n}x{m}")

    theta = rng.uniform(0.0, 10.0, size=(n, m))
    caps = rng.integers(1, max(2, 3 * n // m + 1), size=m)
    dems = np.ones(n, dtype=np.int64)
    profile = ConstraintProfile(capacities=caps, demands=dems)
    solve_exact(theta, profile)  # warm the jit before timing
    tic = time.perf_counter()
    for _ in range(args.reps):
        solve_exact(theta, profile)
    per = (time.perf_counter() - tic) / args.reps
    print(f"exact solver: {per * 1e3:.3f} ms/solve")

    hp = Hyperparams(rank=min(5, n, m))
    log = ObservationLog(n, m)
    for t in range(1, 6):
        users = rng.integers(0, n, size=n)
        items = rng.integers(0, m, size=n)
        for u, i in zip(users, items):
            log.append(t, int(u), int(i), float(rng.normal(theta[u, i], 1.0)))
    tic = time.perf_counter()
    for _ in range(args.reps):
        als_least_squares(log, hp, init=0)
    per = (time.perf_counter() - tic) / args.reps
    print(f"als fit: {per * 1e3:.3f} ms/fit")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="capbandit",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="YAML/JSON config file")
    p_run.add_argument("--out", help="override runner.output_path")
    p_run.add_argument("--seeds", type=int, help="override runner.n_seeds")
    p_run.add_argument("--threads", type=int, help="override runner.threads")
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="one-shot exact allocation")
    p_oracle.add_argument("--theta", required=True, help="CSV matrix of mean rewards")
    p_oracle.add_argument("--capacities", required=True, help="CSV vector of capacities")
    p_oracle.add_argument("--demands", required=True, help="CSV vector of demands")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_bench = sub.add_parser("bench", help="time the solver and estimator")
    p_bench.add_argument("--n-users", type=int, default=100)
    p_bench.add_argument("--n-items", type=int, default=40)
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RatingsParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
