"""Low-rank reward estimation and optimistic maximization.

The learner keeps a rank-R factor model Theta = P @ Q.T fitted by
regularized alternating least squares, a count-weighted confidence
ellipsoid around the estimate, and an optimistic step that jointly picks
an allocation and the most favorable matrix inside the ellipsoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import solve_exact
from .model import ConstraintProfile, DimensionMismatchError, Hyperparams, ObservationLog

_JITTER = 1e-10


@dataclass
class FactorPair:
    """User factors P (n_users x rank) and item factors Q (n_items x rank)."""

    P: np.ndarray
    Q: np.ndarray

    def product(self):
        return self.P @ self.Q.T


@dataclass
class ConfidenceSpec:
    """Count-weighted ellipsoid {theta : ||theta - center||_E <= sqrt(beta)}.

    The squared norm weights entry (u, i) by (counts[u, i] + gamma), so the
    set is wider in directions that have been explored less.
    """

    center: np.ndarray
    counts: np.ndarray
    gamma: float
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


def empirical_norm_sq(delta, counts, gamma: float) -> float:
    """Count-weighted squared norm sum_{u,i} (n_ui + gamma) * delta_ui^2."""
    d = np.asarray(delta, dtype=np.float64)
    n = np.asarray(counts, dtype=np.float64)
    if d.shape != n.shape:
        raise DimensionMismatchError(f"delta {d.shape} vs counts {n.shape}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return float(np.sum((n + gamma) * d * d))


def covering_log_bound(n_users: int, n_items: int, rank: int,
                       reward_bound: float, alpha: float) -> float:
    """Log covering number bound for rank-<=R matrices with entries in [0, B].

    Returns max(0, (N + M + 1) * R * ln(9 * B * sqrt(N*M) / alpha)); the
    clamp covers discretization scales coarser than the set diameter.
    """
    if n_users < 1 or n_items < 1 or rank < 1:
        raise ValueError("dimensions and rank must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if reward_bound < 0:
        raise ValueError("reward bound must be >= 0")
    ratio = 9.0 * reward_bound * math.sqrt(n_users * n_items) / alpha
    if ratio <= 1.0:
        return 0.0
    return (n_users + n_items + 1) * rank * math.log(ratio)


def beta_star_value(n_users: int, n_items: int, t: int, *, eta: float,
                    reward_bound: float, init_radius: float, gamma: float,
                    delta: float, alpha: float, rank: int) -> float:
    """Theoretical squared confidence radius at round t.

    beta*_t = 8 eta^2 ln(N_cover / delta)
            + 2 alpha t N M [8 B + sqrt(8 eta^2 ln(4 N M t^2 / delta))]
            + 4 gamma G^2
    with ln(N_cover) given by :func:`covering_log_bound`.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if gamma <= 0 or alpha <= 0:
        raise ValueError("gamma and alpha must be > 0")
    if eta < 0 or reward_bound < 0 or init_radius < 0:
        raise ValueError("eta, reward bound, and init radius must be >= 0")
    d = n_users * n_items
    log_cover = covering_log_bound(n_users, n_items, rank, reward_bound, alpha)
    term1 = 8.0 * eta * eta * (log_cover + math.log(1.0 / delta))
    tail = math.sqrt(8.0 * eta * eta * math.log(4.0 * d * t * t / delta))
    term2 = 2.0 * alpha * t * d * (8.0 * reward_bound + tail)
    term3 = 4.0 * gamma * init_radius * init_radius
    return term1 + term2 + term3


def beta_star(hp: Hyperparams, t: int, n_users: int, n_items: int) -> float:
    """Theoretical radius from a hyperparameter bundle (see beta_star_value)."""
    return beta_star_value(n_users, n_items, t, eta=hp.eta, reward_bound=hp.B,
                           init_radius=hp.G, gamma=hp.gamma, delta=hp.delta,
                           alpha=hp.alpha_cover, rank=hp.rank)


def practical_beta(kappa: float, eta: float, n_users: int, n_items: int, t: int) -> float:
    """Simulation-scale squared radius kappa^2 * eta^2 * ln(N*M*t).

    The theoretical radius is far too conservative to be useful in
    experiments; this keeps the same shape (log growth in t) at a usable
    magnitude, with kappa as the single tuning knob.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    return kappa * kappa * eta * eta * math.log(max(n_users * n_items * t, 1))


def init_factors(n_users: int, n_items: int, rank: int, reward_bound: float,
                 rng: np.random.Generator) -> FactorPair:
    """Uniform factor init on [0, sqrt(B/R)] so products start at scale B."""
    hi = math.sqrt(reward_bound / rank)
    return FactorPair(P=rng.uniform(0.0, hi, size=(n_users, rank)),
                      Q=rng.uniform(0.0, hi, size=(n_items, rank)))


def _als_objective(Z, counts, sums, sq_sums, gamma, theta_bar):
    data = float(np.sum(counts * Z * Z - 2.0 * sums * Z + sq_sums))
    reg = gamma * float(np.sum((Z - theta_bar) ** 2))
    return data + reg


def _weighted_factor_solve(weights, targets, F):
    """Solve rows of argmin_G sum_ui w_ui (g_u . f_i - y_ui / w_ui ... ).

    For each row u: minimizes sum_i w_ui (g_u @ f_i)^2 - 2 targets_ui (g_u @ f_i),
    i.e. the normal equations [F' diag(w_u) F] g_u = F' targets_u.
    weights: (n, m), targets: (n, m), F: (m, r) -> returns (n, r).
    """
    r = F.shape[1]
    lhs = np.matmul(weights[:, None, :] * F.T[None, :, :], F)
    lhs += _JITTER * np.eye(r)[None, :, :]
    rhs = targets @ F
    return np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]


def als_least_squares(log: ObservationLog, hp: Hyperparams, theta_bar=None,
                      init=None, tol: float = 1e-6, max_sweeps: int = 100):
    """Regularized least squares over rank-R factor pairs, by alternation.

    Minimizes sum over observations (p_u @ q_i - r)^2
    + gamma * ||P Q^T - theta_bar||_F^2. Each half-sweep solves its convex
    subproblem exactly (row-wise SPD systems), so the objective can only
    decrease. Returns (factors, estimate clipped to [0, B], objective trace);
    the trace starts with the objective at the initial factors and appends
    one value per completed sweep.
    """
    n, m = log.n_users, log.n_items
    if hp.rank > min(n, m):
        raise ValueError(f"rank {hp.rank} exceeds min(n_users, n_items) = {min(n, m)}")
    if theta_bar is None:
        theta_bar = np.zeros((n, m), dtype=np.float64)
    else:
        theta_bar = np.asarray(theta_bar, dtype=np.float64)
        if theta_bar.shape != (n, m):
            raise DimensionMismatchError(f"theta_bar {theta_bar.shape} vs log ({n}, {m})")

    if isinstance(init, FactorPair):
        P = init.P.copy()
        Q = init.Q.copy()
    else:
        rng = init if isinstance(init, np.random.Generator) else np.random.default_rng(init)
        fp = init_factors(n, m, hp.rank, hp.B, rng)
        P, Q = fp.P, fp.Q

    counts = log.counts.astype(np.float64)
    sums = log.reward_sums
    sq_sums = log.reward_sq_sums
    gamma = hp.gamma
    weights = counts + gamma                 # per-entry quadratic weight
    targets = sums + gamma * theta_bar       # per-entry linear coefficient

    trace = [_als_objective(P @ Q.T, counts, sums, sq_sums, gamma, theta_bar)]
    for _ in range(max_sweeps):
        P = _weighted_factor_solve(weights, targets, Q)
        Q = _weighted_factor_solve(weights.T, targets.T, P)
        obj = _als_objective(P @ Q.T, counts, sums, sq_sums, gamma, theta_bar)
        trace.append(obj)
        prev = trace[-2]
        if prev - obj < tol * max(abs(prev), 1.0):
            break

    theta_hat = np.clip(P @ Q.T, 0.0, hp.B)
    return FactorPair(P=P, Q=Q), theta_hat, trace


def project_to_confidence(theta, spec: ConfidenceSpec):
    """Radially shrink theta toward the ellipsoid center if it lies outside."""
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != spec.center.shape:
        raise DimensionMismatchError(f"theta {th.shape} vs center {spec.center.shape}")
    diff = th - spec.center
    norm_sq = empirical_norm_sq(diff, spec.counts, spec.gamma)
    if norm_sq <= spec.beta or norm_sq == 0.0:
        return th
    scale = math.sqrt(spec.beta / norm_sq)
    return spec.center + scale * diff


def _ellipsoid_argmax(x, spec: ConfidenceSpec):
    """Closed-form maximizer of <X, theta> over the confidence ellipsoid.

    The optimum adds sqrt(beta) * x_ui / ((n_ui + gamma) * ||X||_{E^-1}) to
    the center, where ||X||^2_{E^-1} = sum over allocated pairs of
    1 / (n_ui + gamma). An empty allocation leaves the center unchanged.
    """
    w = x / (spec.counts + spec.gamma)
    inv_norm_sq = float(np.sum(w[x == 1]))
    if inv_norm_sq <= 0.0 or spec.beta <= 0.0:
        return spec.center.copy()
    return spec.center + math.sqrt(spec.beta) * w / math.sqrt(inv_norm_sq)


def _ucb_value(x, spec: ConfidenceSpec):
    """<X, center> + sqrt(beta) * ||X||_{E^-1}: value of X against its
    ellipsoid maximizer."""
    sel = x == 1
    inv_norm_sq = float(np.sum(1.0 / (spec.counts[sel] + spec.gamma)))
    return float(np.sum(spec.center[sel])) + math.sqrt(spec.beta * inv_norm_sq)


def _svd_factors(theta, rank):
    u, s, vt = np.linalg.svd(theta, full_matrices=False)
    r = min(rank, s.shape[0])
    root = np.sqrt(s[:r])
    return FactorPair(P=u[:, :r] * root[None, :], Q=vt[:r, :].T * root[None, :])


def _boundary_step(d0, d1, spec):
    """Largest s >= 0 with center + d0 + s * d1 still inside the ellipsoid.

    d0 is the current offset from the center and d1 the movement direction,
    both in matrix space; solves the boundary quadratic in s.
    """
    w = spec.counts + spec.gamma
    a = float(np.sum(w * d1 * d1))
    if a <= 0.0:
        return 0.0
    b = 2.0 * float(np.sum(w * d0 * d1))
    c = float(np.sum(w * d0 * d0)) - spec.beta
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 0.0
    return max(0.0, (-b + math.sqrt(disc)) / (2.0 * a))


def optimistic_allocation(theta_hat, spec: ConfidenceSpec, hp: Hyperparams,
                          profile: ConstraintProfile, mode: str = "fast",
                          factors: FactorPair | None = None,
                          max_iters: int = 50):
    """Jointly optimistic allocation: argmax over feasible X and theta in the
    confidence ellipsoid of <X, theta>.

    fast mode alternates the closed-form ellipsoid maximizer for the current
    X with an exact allocation solve for the current theta, stopping when an
    allocation repeats. The allocation-value map X -> <X, center> +
    sqrt(beta) ||X||_{E^-1} has local maxima (the closed-form bonus covers
    only the current support), so the alternation runs from several starts
    and keeps the best iterate seen: the all-ones allocation (bonus spread
    over every pair), the plug-in allocation, and the entrywise-UCB
    allocation (every entry at its individual ellipsoid supremum
    center + sqrt(beta / (n + gamma)), which reaches exploratory supports
    the other starts miss). alternating mode follows the factored scheme:
    ascend <X, P Q^T> over P then Q with boundary-scaled gradient steps,
    re-solve X, and repeat.

    Both modes never return a pair scoring below the plug-in allocation
    against theta_hat.
    """
    th = np.asarray(theta_hat, dtype=np.float64)
    if not np.array_equal(th, spec.center):
        raise ValueError("spec.center must equal theta_hat")

    x_plug, _ = solve_exact(th, profile)

    if mode == "fast":
        best_x = x_plug
        best_ucb = _ucb_value(best_x, spec)
        starts = [np.ones_like(x_plug)]
        if spec.beta > 0.0:
            entry_ucb = spec.center + np.sqrt(spec.beta / (spec.counts + spec.gamma))
            x_ucb, _ = solve_exact(entry_ucb, profile)
            ucb = _ucb_value(x_ucb, spec)
            if ucb > best_ucb:
                best_ucb = ucb
                best_x = x_ucb
            starts.append(x_ucb)
        seen = set()
        for x in starts:
            # the iteration map is deterministic, so once an allocation
            # repeats (within or across starts) the trajectory is closed
            for _ in range(max_iters):
                theta_tilde = _ellipsoid_argmax(x, spec)
                x, _ = solve_exact(theta_tilde, profile)
                ucb = _ucb_value(x, spec)
                if ucb > best_ucb:
                    best_ucb = ucb
                    best_x = x
                key = x.tobytes()
                if key in seen:
                    break
                seen.add(key)
        theta_tilde = _ellipsoid_argmax(best_x, spec)
        return best_x, theta_tilde

    if mode != "alternating":
        raise ValueError(f"unknown mode {mode!r}")

    fp = factors if factors is not None else _svd_factors(th, hp.rank)
    P, Q = fp.P.copy(), fp.Q.copy()
    x = np.ones((th.shape[0], th.shape[1]), dtype=np.int8)
    prev_obj = None
    for _ in range(max_iters):
        for _ in range(10):
            moved = 0.0
            grad_p = x @ Q                      # gradient of <X, P Q^T> in P
            s = _boundary_step(P @ Q.T - th, grad_p @ Q.T, spec)
            if s > 0.0:
                P = P + s * grad_p
                moved += s
            grad_q = x.T @ P                    # gradient in Q
            s = _boundary_step(P @ Q.T - th, P @ grad_q.T, spec)
            if s > 0.0:
                Q = Q + s * grad_q
                moved += s
            if moved == 0.0:
                break
        theta_tilde = P @ Q.T
        x, obj = solve_exact(theta_tilde, profile)
        if prev_obj is not None and abs(obj - prev_obj) < 1e-6 * max(abs(prev_obj), 1.0):
            prev_obj = obj
            break
        prev_obj = obj

    theta_tilde = project_to_confidence(P @ Q.T, spec)
    value = float(np.sum(theta_tilde[x == 1]))
    fallback = _ellipsoid_argmax(x_plug, spec)
    fallback_value = float(np.sum(fallback[x_plug == 1]))
    if value < fallback_value:
        return x_plug, fallback
    return x, theta_tilde
