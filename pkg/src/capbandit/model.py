"""Shared data model: reward matrices, allocations, constraints, and history.

Conventions used throughout the package:
  - reward matrices are dense float64 arrays of shape (n_users, n_items),
    row = user, column = item
  - allocation matrices are {0,1} integer arrays of the same shape
  - feasibility arithmetic is exact integer, reward arithmetic is float64
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionMismatchError(ValueError):
    """Shapes of interacting matrices/vectors do not agree."""


def check_reward_matrix(values, n_users=None, n_items=None, upper=None):
    """Validate and return a dense float64 mean-reward matrix.

    When `upper` is given the matrix is treated as ground truth and every
    entry must lie in [0, upper]. Estimates may hold arbitrary finite reals.
    """
    theta = np.asarray(values, dtype=np.float64)
    if theta.ndim != 2:
        raise DimensionMismatchError(f"reward matrix must be 2-D, got shape {theta.shape}")
    if n_users is not None and theta.shape[0] != n_users:
        raise DimensionMismatchError(f"expected {n_users} user rows, got {theta.shape[0]}")
    if n_items is not None and theta.shape[1] != n_items:
        raise DimensionMismatchError(f"expected {n_items} item columns, got {theta.shape[1]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("reward matrix contains non-finite entries")
    if upper is not None:
        if theta.min() < 0.0 or theta.max() > upper:
            raise ValueError(f"ground-truth rewards must lie in [0, {upper}]")
    return theta


def check_allocation_matrix(x):
    """Validate and return an allocation matrix as an int8 {0,1} array."""
    xa = np.asarray(x)
    if xa.ndim != 2:
        raise DimensionMismatchError(f"allocation matrix must be 2-D, got shape {xa.shape}")
    if not np.all((xa == 0) | (xa == 1)):
        raise ValueError("allocation matrix entries must be 0 or 1")
    return xa.astype(np.int8)


def allocation_to_pairs(x):
    """Allocation matrix -> sorted list of allocated (user, item) pairs."""
    xa = check_allocation_matrix(x)
    users, items = np.nonzero(xa)
    return list(zip(users.tolist(), items.tolist()))


def pairs_to_allocation(pairs, n_users, n_items):
    """Inverse of :func:`allocation_to_pairs`; the round trip is the identity."""
    x = np.zeros((n_users, n_items), dtype=np.int8)
    for u, i in pairs:
        x[u, i] = 1
    return x


def single_entry_matrix(u, i, n_users, n_items):
    """Basis allocation with a single one at (u, i)."""
    return pairs_to_allocation([(u, i)], n_users, n_items)


@dataclass(frozen=True)
class ConstraintProfile:
    """Per-round item capacities and user demands (nonnegative integers).

    A binary allocation X is feasible iff every row sum is at most the
    user's demand and every column sum is at most the item's capacity.
    """

    capacities: np.ndarray
    demands: np.ndarray

    def __post_init__(self):
        caps = np.asarray(self.capacities, dtype=np.int64)
        dems = np.asarray(self.demands, dtype=np.int64)
        if caps.ndim != 1 or dems.ndim != 1:
            raise DimensionMismatchError("capacities and demands must be 1-D")
        if caps.min(initial=0) < 0 or dems.min(initial=0) < 0:
            raise ValueError("capacities and demands must be nonnegative")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "demands", dems)

    @property
    def n_items(self):
        return self.capacities.shape[0]

    @property
    def n_users(self):
        return self.demands.shape[0]


@dataclass
class FeasibilityReport:
    feasible: bool
    row_violations: list = field(default_factory=list)  # (user, excess)
    col_violations: list = field(default_factory=list)  # (item, excess)


def validate_allocation(x, profile: ConstraintProfile) -> FeasibilityReport:
    """Check an allocation against a profile; report each violated constraint.

    Feasible iff every row sum <= demand and every column sum <= capacity.
    """
    xa = check_allocation_matrix(x)
    if xa.shape != (profile.n_users, profile.n_items):
        raise DimensionMismatchError(
            f"allocation shape {xa.shape} does not match profile "
            f"({profile.n_users}, {profile.n_items})"
        )
    row_sums = xa.sum(axis=1, dtype=np.int64)
    col_sums = xa.sum(axis=0, dtype=np.int64)
    rows = [(int(u), int(row_sums[u] - profile.demands[u]))
            for u in np.nonzero(row_sums > profile.demands)[0]]
    cols = [(int(i), int(col_sums[i] - profile.capacities[i]))
            for i in np.nonzero(col_sums > profile.capacities)[0]]
    return FeasibilityReport(feasible=not rows and not cols,
                             row_violations=rows, col_violations=cols)


def allocation_value(x, theta) -> float:
    """Frobenius inner product <X, Theta> = sum of selected mean rewards."""
    xa = check_allocation_matrix(x)
    th = np.asarray(theta, dtype=np.float64)
    if xa.shape != th.shape:
        raise DimensionMismatchError(f"allocation {xa.shape} vs rewards {th.shape}")
    return float(np.sum(th[xa == 1]))


def round_regret(x, x_star, theta_star) -> float:
    """Single-round regret <X*, Theta*> - <X, Theta*>.

    Nonnegative whenever `x_star` is optimal for the round's profile.
    """
    return allocation_value(x_star, theta_star) - allocation_value(x, theta_star)


@dataclass(frozen=True)
class Hyperparams:
    """Learner hyperparameters shared across estimation and policies.

    eta:         sub-Gaussian reward scale (noise std for Gaussian rewards)
    B:           upper bound on mean rewards
    G:           Frobenius error radius of the initial rough estimate
    gamma:       least-squares regularization weight
    delta:       confidence level
    alpha_cover: discretization scale of the covering argument
    rank:        latent dimension of the factor model
    """

    eta: float = 1.0
    B: float = 10.0
    G: float = 0.0
    gamma: float = 1.0
    delta: float = 0.05
    alpha_cover: float = 0.01
    rank: int = 2

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.B <= 0:
            raise ValueError("B must be > 0")
        if self.G < 0:
            raise ValueError("G must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.alpha_cover <= 0:
            raise ValueError("alpha_cover must be > 0")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


class ObservationLog:
    """Append-only history of (round, user, item, reward) observations.

    Maintains the per-pair pull counts together with running reward sums
    and squared sums, which are sufficient statistics for the regularized
    least-squares objective.
    """

    def __init__(self, n_users: int, n_items: int):
        self.n_users = n_users
        self.n_items = n_items
        self.records: list[tuple[int, int, int, float]] = []
        self.counts = np.zeros((n_users, n_items), dtype=np.int64)
        self.reward_sums = np.zeros((n_users, n_items), dtype=np.float64)
        self.reward_sq_sums = np.zeros((n_users, n_items), dtype=np.float64)
        self._last_round = 0

    def append(self, t: int, u: int, i: int, reward: float):
        if t < self._last_round:
            raise ValueError(f"round {t} precedes last recorded round {self._last_round}")
        if not (0 <= u < self.n_users and 0 <= i < self.n_items):
            raise IndexError(f"pair ({u}, {i}) out of bounds")
        self.records.append((t, u, i, float(reward)))
        self.counts[u, i] += 1
        self.reward_sums[u, i] += reward
        self.reward_sq_sums[u, i] += reward * reward
        self._last_round = t

    def extend(self, t: int, triples):
        for u, i, r in triples:
            self.append(t, u, i, r)

    def __len__(self):
        return len(self.records)
