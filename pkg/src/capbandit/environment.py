"""Ground-truth reward worlds and constraint dynamics.

All randomness flows through explicitly passed numpy Generators; nothing
touches global random state. Concurrent runs derive independent generators
from (master_seed, run indices) via numpy SeedSequence spawn keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConstraintProfile, check_allocation_matrix


@dataclass(frozen=True)
class WorldConfig:
    """Synthetic world description.

    dynamics "static": every user demands one item each round and capacities
    are drawn once. dynamics "dynamic": demands are Bernoulli(p_active) and
    capacities are redrawn every round with the cap scaled to total demand.
    """

    n_users: int
    n_items: int
    rank: int
    B: float = 10.0
    eta: float = 1.0
    dynamics: str = "static"
    p_active: float = 0.2
    c_max_fixed: int | None = None   # overrides the 3*sum(d)/M rule when set
    include_zero_capacity: bool = False
    noise_scale: float = 0.0         # optional deviation from exact low rank
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1:
            raise ValueError("dimensions must be positive")
        if not 0.0 <= self.p_active <= 1.0:
            raise ValueError("p_active must lie in [0, 1]")
        if self.dynamics not in ("static", "dynamic"):
            raise ValueError(f"unknown dynamics {self.dynamics!r}")


def derive_rng(master_seed: int, *indices: int) -> np.random.Generator:
    """Deterministic per-run generator split keyed on run indices."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(indices))
    return np.random.default_rng(ss)


def gen_synthetic_theta(cfg: WorldConfig, rng: np.random.Generator):
    """Random rank-<=R mean reward matrix with entries in [0, B], max = B.

    Built as a product of uniform[0, 1] factors and rescaled so the largest
    entry equals B exactly. noise_scale > 0 adds clipped entrywise noise,
    producing the approximately-low-rank variant.
    """
    if cfg.rank > min(cfg.n_users, cfg.n_items):
        raise ValueError(f"rank {cfg.rank} exceeds min dimension")
    p = rng.uniform(0.0, 1.0, size=(cfg.n_users, cfg.rank))
    q = rng.uniform(0.0, 1.0, size=(cfg.n_items, cfg.rank))
    theta = p @ q.T
    theta *= cfg.B / theta.max()
    if cfg.noise_scale > 0.0:
        theta = theta + rng.normal(0.0, cfg.noise_scale, size=theta.shape)
        theta = np.clip(theta, 0.0, cfg.B)
        theta *= cfg.B / theta.max()
    return theta


def _cap_ceiling(total_demand: int, n_items: int, cfg: WorldConfig) -> int:
    if cfg.c_max_fixed is not None:
        return max(1, int(cfg.c_max_fixed))
    # floor of 1 keeps the uniform support nonempty in all-inactive rounds
    return max(1, math.ceil(3.0 * total_demand / n_items))


def sample_constraints(cfg: WorldConfig, rng: np.random.Generator, t: int) -> ConstraintProfile:
    """Draw the round-t constraint profile.

    static: all demands one; capacities uniform over {1, ..., ceil(3N/M)}.
    dynamic: demands Bernoulli(p_active); capacities uniform over
    {1, ..., ceil(3 * sum(d) / M)} redrawn each round.
    include_zero_capacity widens the support to {0, ..., C_max}.
    """
    if cfg.dynamics == "static":
        demands = np.ones(cfg.n_users, dtype=np.int64)
    else:
        demands = (rng.uniform(size=cfg.n_users) < cfg.p_active).astype(np.int64)
    c_max = _cap_ceiling(int(demands.sum()), cfg.n_items, cfg)
    lo = 0 if cfg.include_zero_capacity else 1
    caps = rng.integers(lo, c_max + 1, size=cfg.n_items, dtype=np.int64)
    return ConstraintProfile(capacities=caps, demands=demands)


def sample_rewards(theta_star, x, eta: float, rng: np.random.Generator):
    """One Gaussian draw N(theta*_ui, eta^2) per allocated pair.

    Returns the list of (user, item, reward) triples; realizations are not
    clipped to [0, B] (only the means are bounded).
    """
    xa = check_allocation_matrix(x)
    users, items = np.nonzero(xa)
    means = np.asarray(theta_star, dtype=np.float64)[users, items]
    noise = rng.normal(0.0, eta, size=means.shape[0]) if eta > 0 else np.zeros(means.shape[0])
    rewards = means + noise
    return list(zip(users.tolist(), items.tolist(), rewards.tolist()))


def apply_capacity_drop(requested, profile: ConstraintProfile, rng: np.random.Generator):
    """Resolve over-capacity requests by keeping a uniform random subset.

    For every item whose requesters exceed its capacity, a uniformly random
    subset of size c_i is served and the remainder dropped. The realized
    allocation is always feasible. Returns (realized, dropped pairs).
    """
    xa = check_allocation_matrix(requested).copy()
    dropped = []
    for i in range(profile.n_items):
        requesters = np.nonzero(xa[:, i])[0]
        cap = int(profile.capacities[i])
        if requesters.shape[0] <= cap:
            continue
        keep = rng.choice(requesters, size=cap, replace=False) if cap > 0 else np.empty(0, dtype=np.int64)
        keep_set = set(keep.tolist())
        for u in requesters.tolist():
            if u not in keep_set:
                xa[u, i] = 0
                dropped.append((u, i))
    return xa, dropped


class World:
    """A seeded simulation world: ground truth, constraints, and rewards.

    Static worlds cache the single profile drawn at round one and reuse it.
    """

    def __init__(self, cfg: WorldConfig, theta_star=None, rng=None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.theta_star = (np.asarray(theta_star, dtype=np.float64)
                           if theta_star is not None
                           else gen_synthetic_theta(cfg, self.rng))
        self._static_profile = None

    @property
    def n_users(self):
        return self.theta_star.shape[0]

    @property
    def n_items(self):
        return self.theta_star.shape[1]

    def profile(self, t: int) -> ConstraintProfile:
        if self.cfg.dynamics == "static":
            if self._static_profile is None:
                self._static_profile = sample_constraints(self.cfg, self.rng, 1)
            return self._static_profile
        return sample_constraints(self.cfg, self.rng, t)

    def rewards(self, x):
        return sample_rewards(self.theta_star, x, self.cfg.eta, self.rng)

    def capacity_drop(self, requested, profile: ConstraintProfile):
        return apply_capacity_drop(requested, profile, self.rng)
