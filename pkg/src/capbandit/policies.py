"""Interactive allocation policies behind a common select/update interface.

Five strategies:
  - LRComb: optimistic low-rank learner (confidence-set maximization coupled
    with the exact capacity-aware solver)
  - Acf: plug-in collaborative filtering (greedy against the current
    least-squares estimate)
  - Cucb: combinatorial UCB treating every (user, item) pair as an
    independent arm
  - Icf / Icf2: per-user linear UCB over learned item features, oblivious to
    capacities; Icf2 additionally records dropped requests as zero rewards

LRComb, Acf, and Cucb always request feasible allocations; Icf/Icf2 respect
demand constraints only and rely on the environment to resolve overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import solve_exact
from .lowrank import (
    ConfidenceSpec,
    FactorPair,
    als_least_squares,
    init_factors,
    optimistic_allocation,
    practical_beta,
)
from .model import (
    ConstraintProfile,
    Hyperparams,
    ObservationLog,
    allocation_to_pairs,
    check_allocation_matrix,
)

CUCB_UNPLAYED = math.inf


@dataclass
class RoundFeedback:
    """Environment response to one requested allocation.

    rewards hold (user, item, reward) for served pairs; dropped_pairs are
    requests the environment refused for capacity reasons;
    forced_zero_pairs are the dropped requests that should enter the log
    with reward zero (capacity-oblivious learners with punitive feedback).
    """

    realized: np.ndarray
    rewards: list = field(default_factory=list)
    dropped_pairs: list = field(default_factory=list)
    forced_zero_pairs: list = field(default_factory=list)

    def __post_init__(self):
        realized_pairs = set(allocation_to_pairs(self.realized))
        if realized_pairs & set(self.dropped_pairs):
            raise ValueError("realized and dropped pairs must be disjoint")


def cucb_index(mean: float, count: int, t: int, reward_bound: float,
               scale: float = 1.5) -> float:
    """Per-arm optimistic index: mean + B * sqrt(scale * ln t / count).

    Unplayed arms get an infinite sentinel to force initial exploration.
    """
    if count == 0:
        return CUCB_UNPLAYED
    return mean + reward_bound * math.sqrt(scale * math.log(t) / count)


class Policy:
    """Base class: owns the observation log and the select/update cycle."""

    name = "base"

    def __init__(self, n_users: int, n_items: int, hp: Hyperparams,
                 rng: np.random.Generator | int | None = None):
        self.n_users = n_users
        self.n_items = n_items
        self.hp = hp
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.log = ObservationLog(n_users, n_items)
        self.t = 1
        self._last_requested: np.ndarray | None = None

    # -- interface ---------------------------------------------------------

    def select(self, profile: ConstraintProfile) -> np.ndarray:
        if profile.n_users != self.n_users or profile.n_items != self.n_items:
            raise ValueError("profile dimensions do not match policy")
        x = self._select(profile)
        self._last_requested = x
        return x

    def update(self, feedback: RoundFeedback) -> None:
        if self._last_requested is None:
            raise RuntimeError("update() called before select()")
        requested = set(allocation_to_pairs(self._last_requested))
        for u, i, _ in feedback.rewards:
            if (u, i) not in requested:
                raise ValueError(f"feedback pair ({u}, {i}) was not requested")
        for pair in feedback.forced_zero_pairs:
            if tuple(pair) not in requested:
                raise ValueError(f"forced-zero pair {pair} was not requested")
        for u, i, r in feedback.rewards:
            self.log.append(self.t, u, i, r)
        self._absorb(feedback)
        self.t += 1
        self._last_requested = None

    # -- hooks -------------------------------------------------------------

    def _select(self, profile: ConstraintProfile) -> np.ndarray:
        raise NotImplementedError

    def _absorb(self, feedback: RoundFeedback) -> None:
        pass


class CucbPolicy(Policy):
    """Combinatorial UCB over independent arms.

    Indices are clipped to [0, 2B] before the exact solve so the infinite
    exploration sentinel becomes a finite priority above every realizable
    mean.
    """

    name = "cucb"

    def __init__(self, n_users, n_items, hp, rng=None, scale: float = 1.5):
        super().__init__(n_users, n_items, hp, rng)
        self.scale = scale

    def index_matrix(self) -> np.ndarray:
        counts = self.log.counts
        means = np.zeros_like(self.log.reward_sums)
        played = counts > 0
        means[played] = self.log.reward_sums[played] / counts[played]
        bonus_cap = self.hp.B
        idx = np.full(means.shape, self.hp.B + bonus_cap, dtype=np.float64)
        if self.t > 1:
            bonus = self.hp.B * np.sqrt(self.scale * math.log(self.t) / np.maximum(counts, 1))
            idx[played] = means[played] + bonus[played]
        else:
            idx[played] = means[played]
        return np.clip(idx, 0.0, self.hp.B + bonus_cap)

    def _select(self, profile):
        x, _ = solve_exact(self.index_matrix(), profile)
        return x


class _FactorModelPolicy(Policy):
    """Shared machinery: per-round regularized ALS refit with warm start.

    The least-squares regularizer pulls unobserved entries toward the rough
    initial estimate theta_bar. The default prior of B/2 everywhere keeps
    plug-in selection alive before any data arrives; a zero prior would
    estimate zero rewards and allocate nothing forever.
    """

    def __init__(self, n_users, n_items, hp, rng=None, theta_bar=None,
                 prior_mean=None):
        super().__init__(n_users, n_items, hp, rng)
        if theta_bar is None:
            mean = 0.5 * hp.B if prior_mean is None else float(prior_mean)
            theta_bar = np.full((n_users, n_items), mean, dtype=np.float64)
        self.theta_bar = theta_bar
        self._factors: FactorPair | None = None
        self.theta_hat = np.zeros((n_users, n_items), dtype=np.float64)

    def refit(self):
        init = self._factors if self._factors is not None else self.rng
        self._factors, self.theta_hat, _ = als_least_squares(
            self.log, self.hp, theta_bar=self.theta_bar, init=init)
        return self.theta_hat


class AcfPolicy(_FactorModelPolicy):
    """Plug-in collaborative filtering: greedy against the ALS estimate."""

    name = "acf"

    def _select(self, profile):
        theta_hat = self.refit()
        x, _ = solve_exact(theta_hat, profile)
        return x


class LRCombPolicy(_FactorModelPolicy):
    """Optimistic low-rank learner.

    Each round refits the factor model, builds the count-weighted confidence
    ellipsoid with the practical radius kappa^2 eta^2 ln(N M t), and picks
    the allocation maximizing reward over the ellipsoid. kappa = 0 collapses
    to the plug-in (Acf) choice.
    """

    name = "lrcomb"

    def __init__(self, n_users, n_items, hp, rng=None, theta_bar=None,
                 prior_mean=None, kappa: float = 1.0, mode: str = "fast"):
        super().__init__(n_users, n_items, hp, rng, theta_bar, prior_mean)
        self.kappa = kappa
        self.mode = mode
        self.theta_tilde = None

    def current_beta(self) -> float:
        return practical_beta(self.kappa, self.hp.eta, self.n_users,
                              self.n_items, self.t)

    def _select(self, profile):
        theta_hat = self.refit()
        spec = ConfidenceSpec(center=theta_hat, counts=self.log.counts,
                              gamma=self.hp.gamma, beta=self.current_beta())
        x, self.theta_tilde = optimistic_allocation(
            theta_hat, spec, self.hp, profile, mode=self.mode,
            factors=self._factors)
        return x


class IcfPolicy(Policy):
    """Per-user linear UCB over learned item features, capacity-oblivious.

    Item features are the item-side factors of a periodic ALS refit of the
    policy's own log. Each user independently ranks items by
    theta_u . q_i + kappa_icf * eta * sqrt(R ln t) * sqrt(q_i' A_u^-1 q_i)
    and requests its top demand-many items.
    """

    name = "icf"
    zero_reward_on_drop = False

    def __init__(self, n_users, n_items, hp, rng=None, refit_every: int = 5,
                 ridge_reg: float = 1.0, kappa_icf: float = 1.0):
        super().__init__(n_users, n_items, hp, rng)
        self.refit_every = refit_every
        self.ridge_reg = ridge_reg
        self.kappa_icf = kappa_icf
        self._q = init_factors(n_users, n_items, hp.rank, hp.B, self.rng).Q

    def _maybe_refit_features(self):
        if len(self.log) == 0:
            return
        if (self.t - 1) % self.refit_every != 0:
            return
        factors, _, _ = als_least_squares(self.log, self.hp, init=self.rng)
        self._q = factors.Q

    def score_matrix(self) -> np.ndarray:
        q = self._q
        r = q.shape[1]
        # per-user ridge statistics against the current features
        lhs = np.matmul(self.log.counts[:, None, :].astype(np.float64) * q.T[None, :, :], q)
        lhs += self.ridge_reg * np.eye(r)[None, :, :]
        rhs = self.log.reward_sums @ q
        a_inv = np.linalg.inv(lhs)
        theta = np.matmul(a_inv, rhs[:, :, None])[:, :, 0]
        means = theta @ q.T
        var = np.einsum("ir,urs,is->ui", q, a_inv, q)
        width = (self.kappa_icf * self.hp.eta * math.sqrt(self.hp.rank * math.log(self.t))
                 if self.t > 1 else 0.0)
        return means + width * np.sqrt(np.maximum(var, 0.0))

    def _select(self, profile):
        self._maybe_refit_features()
        scores = self.score_matrix()
        x = np.zeros((self.n_users, self.n_items), dtype=np.int8)
        order = np.argsort(-scores, axis=1, kind="stable")
        for u in range(self.n_users):
            d = int(profile.demands[u])
            if d > 0:
                x[u, order[u, :d]] = 1
        return x

    def _absorb(self, feedback):
        if self.zero_reward_on_drop:
            for u, i in feedback.forced_zero_pairs:
                self.log.append(self.t, u, i, 0.0)


class Icf2Policy(IcfPolicy):
    """Icf variant observing zero reward for every dropped request."""

    name = "icf2"
    zero_reward_on_drop = True


POLICY_KINDS = {
    "lrcomb": LRCombPolicy,
    "acf": AcfPolicy,
    "cucb": CucbPolicy,
    "icf": IcfPolicy,
    "icf2": Icf2Policy,
}


def make_policy(kind: str, n_users: int, n_items: int, hp: Hyperparams,
                rng=None, **kwargs) -> Policy:
    try:
        cls = POLICY_KINDS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown policy kind {kind!r}; "
                         f"expected one of {sorted(POLICY_KINDS)}") from None
    return cls(n_users, n_items, hp, rng=rng, **kwargs)


def is_capacity_aware(policy: Policy) -> bool:
    """Policies that always request feasible allocations."""
    return not isinstance(policy, IcfPolicy)
