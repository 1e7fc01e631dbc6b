"""Experiment orchestration: the select/allocate/observe/update loop,
per-round regret accounting against the exact optimum, multi-seed sweeps,
and CSV persistence.

Seeding layout (documented for reproducibility): the world for seed index k
uses generator SeedSequence(master_seed, spawn_key=(k, 0)) and the policy at
list position j uses SeedSequence(master_seed, spawn_key=(k, 1, j)). Worlds
are therefore identical across policies within a seed index, so policies
face the same problem instances.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, PolicySpec, WorldSpec
from .datasets import complete_matrix, load_movielens, load_rc
from .environment import World, WorldConfig, derive_rng
from .model import Hyperparams, allocation_value, validate_allocation
from .policies import RoundFeedback, is_capacity_aware, make_policy
from .allocation import solve_exact

CSV_HEADER = ("policy,seed,t,reward,expected_reward,optimal_reward,"
              "regret,cumulative_regret,dropped_count,runtime_ms")


@dataclass
class RoundRecord:
    policy: str
    seed: int
    t: int
    reward: float             # realized reward sum for the round
    expected_reward: float    # <X_realized, Theta*>
    optimal_reward: float     # <X*, Theta*> for the round's profile
    regret: float
    cumulative_regret: float
    dropped_count: int
    runtime_ms: float


def _world_config(spec: WorldSpec, theta_shape=None) -> WorldConfig:
    n_users = spec.n_users if spec.type == "synthetic" else theta_shape[0]
    n_items = spec.n_items if spec.type == "synthetic" else theta_shape[1]
    return WorldConfig(n_users=n_users, n_items=n_items, rank=spec.rank,
                       B=spec.B, eta=spec.eta, dynamics=spec.dynamics,
                       p_active=spec.p_active, c_max_fixed=spec.c_max,
                       include_zero_capacity=spec.include_zero_capacity,
                       noise_scale=spec.noise_scale)


def build_dataset_theta(spec: WorldSpec, master_seed: int):
    """Dense ground truth for dataset-backed worlds, via rank-R completion."""
    loader = load_movielens if spec.type == "movielens" else load_rc
    ratings = loader(spec.path)
    rng = np.random.default_rng(master_seed)
    return complete_matrix(ratings, spec.completion_rank, reg=spec.completion_reg,
                           sweeps=spec.completion_sweeps, rng=rng)


def _build_policy(pspec: PolicySpec, world_cfg: WorldConfig, rng, theta_bar=None):
    hp = Hyperparams(eta=world_cfg.eta, B=world_cfg.B, gamma=pspec.gamma,
                     rank=pspec.rank if pspec.rank is not None else world_cfg.rank)
    kwargs = dict(pspec.params)
    if theta_bar is not None and pspec.kind in ("lrcomb", "acf"):
        kwargs.pop("prior_mean", None)
        kwargs["theta_bar"] = theta_bar
    return make_policy(pspec.kind, world_cfg.n_users, world_cfg.n_items, hp,
                       rng=rng, **kwargs)


def build_initial_estimate(theta_star, eta: float, reward_bound: float,
                           n_samples, rank: int, rng):
    """Rough initial estimate from one-shot random pair samples.

    Draws `n_samples` distinct pairs (a fraction of all pairs when < 1),
    observes each once with the world's reward noise, and completes the
    samples to a rank-R matrix. This is the initialization data the
    factor-model policies regularize toward; it enters through the
    regularizer only, never through the observation log.
    """
    from .datasets import SparseRatings

    n, m = theta_star.shape
    total = n * m
    k = int(round(n_samples * total)) if 0 < n_samples < 1 else int(n_samples)
    k = max(1, min(k, total))
    flat = rng.choice(total, size=k, replace=False)
    users, items = np.unravel_index(flat, (n, m))
    vals = theta_star[users, items]
    if eta > 0:
        vals = vals + rng.normal(0.0, eta, size=k)
    vals = np.clip(vals, 0.0, reward_bound)
    triples = [(int(u), int(i), float(v)) for u, i, v in zip(users, items, vals)]
    ratings = SparseRatings(triples=triples, n_users=n, n_items=m,
                            rating_range=(0.0, reward_bound))
    return complete_matrix(ratings, rank=rank, reg=1e-2, sweeps=30, rng=rng)


def run_single(cfg: ExperimentConfig, policy_pos: int, seed_index: int,
               dataset_theta=None):
    """One (policy, seed) bandit run; returns its per-round records."""
    pspec = cfg.policies[policy_pos]
    world_cfg = _world_config(cfg.world,
                              dataset_theta.shape if dataset_theta is not None else None)
    world = World(world_cfg, theta_star=dataset_theta,
                  rng=derive_rng(cfg.master_seed, seed_index, 0))
    theta_bar = None
    if cfg.init_samples:
        # dedicated stream so the initialization is identical across policies
        rank = pspec.rank if pspec.rank is not None else world_cfg.rank
        theta_bar = build_initial_estimate(world.theta_star, world_cfg.eta,
                                           world_cfg.B, cfg.init_samples, rank,
                                           derive_rng(cfg.master_seed, seed_index, 2))
    policy = _build_policy(pspec, world_cfg,
                           derive_rng(cfg.master_seed, seed_index, 1, policy_pos),
                           theta_bar=theta_bar)
    aware = is_capacity_aware(policy)
    punitive = getattr(policy, "zero_reward_on_drop", False)

    records = []
    cumulative = 0.0
    optimum_cache = {}
    for t in range(1, cfg.horizon + 1):
        profile = world.profile(t)
        tic = time.perf_counter()
        requested = policy.select(profile)
        if aware:
            report = validate_allocation(requested, profile)
            if not report.feasible:
                raise RuntimeError(f"{policy.name} produced an infeasible allocation "
                                   f"at round {t}: {report}")
            realized, dropped = requested, []
        else:
            realized, dropped = world.capacity_drop(requested, profile)
        rewards = world.rewards(realized)
        feedback = RoundFeedback(realized=realized, rewards=rewards,
                                 dropped_pairs=dropped,
                                 forced_zero_pairs=dropped if punitive else [])
        policy.update(feedback)
        elapsed_ms = (time.perf_counter() - tic) * 1e3 if cfg.record_runtime else 0.0

        key = (profile.capacities.tobytes(), profile.demands.tobytes())
        if key not in optimum_cache:
            _, opt_value = solve_exact(world.theta_star, profile)
            optimum_cache[key] = opt_value
        opt_value = optimum_cache[key]
        expected = allocation_value(realized, world.theta_star)
        regret = opt_value - expected
        cumulative += regret
        records.append(RoundRecord(policy=pspec.name, seed=seed_index, t=t,
                                   reward=float(sum(r for _, _, r in rewards)),
                                   expected_reward=expected,
                                   optimal_reward=opt_value, regret=regret,
                                   cumulative_regret=cumulative,
                                   dropped_count=len(dropped),
                                   runtime_ms=elapsed_ms))
    if not cfg.emit_per_round:
        records = records[-1:]
    return records


def _run_unit(args):
    cfg, policy_pos, seed_index, dataset_theta = args
    return run_single(cfg, policy_pos, seed_index, dataset_theta)


def run_experiment(cfg: ExperimentConfig):
    """All (policy, seed) runs of a config, merged deterministically.

    Records are ordered by (policy name, seed, t) regardless of the number
    of worker processes.
    """
    dataset_theta = None
    if cfg.world.type != "synthetic":
        dataset_theta = build_dataset_theta(cfg.world, cfg.master_seed)

    units = [(cfg, p, s, dataset_theta)
             for p in range(len(cfg.policies))
             for s in range(cfg.n_seeds)]
    if cfg.threads > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(_run_unit, units))
    else:
        chunks = [_run_unit(u) for u in units]

    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.policy, r.seed, r.t))
    return records


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def resolve_output_path(path: str) -> str:
    """Apply the CAPBANDIT_OUTPUT_DIR override, keeping the file name."""
    override = os.environ.get("CAPBANDIT_OUTPUT_DIR")
    if override:
        return os.path.join(override, os.path.basename(path))
    return path


def write_csv(records, path):
    """Persist records with 9-significant-digit reals, sorted rows."""
    ordered = sorted(records, key=lambda r: (r.policy, r.seed, r.t))
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in ordered:
            fh.write(",".join([
                r.policy, str(r.seed), str(r.t), _fmt(r.reward),
                _fmt(r.expected_reward), _fmt(r.optimal_reward), _fmt(r.regret),
                _fmt(r.cumulative_regret), str(r.dropped_count),
                _fmt(r.runtime_ms),
            ]) + "\n")


def read_csv(path):
    """Parse a results CSV back into RoundRecord objects."""
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            records.append(RoundRecord(
                policy=parts[0], seed=int(parts[1]), t=int(parts[2]),
                reward=float(parts[3]), expected_reward=float(parts[4]),
                optimal_reward=float(parts[5]), regret=float(parts[6]),
                cumulative_regret=float(parts[7]), dropped_count=int(parts[8]),
                runtime_ms=float(parts[9])))
    return records
