"""Exact and price-based solvers for the capacity/demand allocation problem.

The core problem: given mean rewards theta (n_users x n_items), capacities c
and demands d, find a binary X maximizing <X, theta> subject to
X @ 1 <= d and X.T @ 1 <= c. The LP relaxation of this program has a totally
unimodular constraint matrix, so an exact integral optimum exists; we find it
with min-cost max-flow over the transportation network
source -> users (cap d_u) -> items (cap 1 per pair, cost -theta) -> sink
(cap c_i), using successive shortest augmenting paths with node potentials.

Allocation is optional under the <= constraints, so pairs with theta <= 0 are
never allocated: dropping them cannot decrease the objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit

from .model import (
    ConstraintProfile,
    DimensionMismatchError,
    allocation_value,
    validate_allocation,
)

# comparison tolerance for real-valued edge costs inside the flow solver
COST_EPS = 1e-12


@njit(cache=True)
def _ssp_flow(theta, caps, demands, eps):  # pragma: no cover - jitted
    n, m = theta.shape
    n_nodes = n + m + 2
    src = 0
    sink = n + m + 1
    INF = np.inf

    x = np.zeros((n, m), dtype=np.int8)
    f_src = np.zeros(n, dtype=np.int64)   # flow on source -> user edges
    f_sink = np.zeros(m, dtype=np.int64)  # flow on item -> sink edges

    # exact initial distances over the layered DAG give valid potentials
    pi = np.zeros(n_nodes, dtype=np.float64)
    for i in range(m):
        best = INF
        for u in range(n):
            if theta[u, i] > 0.0 and demands[u] > 0:
                c = -theta[u, i]
                if c < best:
                    best = c
        if best < INF:
            pi[n + 1 + i] = best
    best_sink = 0.0
    for i in range(m):
        if caps[i] > 0 and pi[n + 1 + i] < best_sink:
            best_sink = pi[n + 1 + i]
    pi[sink] = best_sink

    dist = np.empty(n_nodes, dtype=np.float64)
    done = np.empty(n_nodes, dtype=np.bool_)
    par = np.empty(n_nodes, dtype=np.int64)

    while True:
        for v in range(n_nodes):
            dist[v] = INF
            done[v] = False
            par[v] = -1
        dist[src] = 0.0

        # dense Dijkstra with reduced costs; lowest node index wins ties
        for _ in range(n_nodes):
            best = INF
            bv = -1
            for v in range(n_nodes):
                if not done[v] and dist[v] < best:
                    best = dist[v]
                    bv = v
            if bv == -1:
                break
            done[bv] = True
            if bv == sink:
                continue
            d0 = dist[bv]
            if bv == src:
                for u in range(n):
                    if f_src[u] < demands[u]:
                        rc = pi[src] - pi[1 + u]
                        if rc < 0.0:
                            rc = 0.0
                        if d0 + rc < dist[1 + u]:
                            dist[1 + u] = d0 + rc
                            par[1 + u] = src
            elif bv <= n:
                u = bv - 1
                for i in range(m):
                    if x[u, i] == 0 and theta[u, i] > 0.0:
                        rc = -theta[u, i] + pi[bv] - pi[n + 1 + i]
                        if rc < 0.0:
                            rc = 0.0
                        if d0 + rc < dist[n + 1 + i]:
                            dist[n + 1 + i] = d0 + rc
                            par[n + 1 + i] = bv
            else:
                i = bv - n - 1
                if f_sink[i] < caps[i]:
                    rc = pi[bv] - pi[sink]
                    if rc < 0.0:
                        rc = 0.0
                    if d0 + rc < dist[sink]:
                        dist[sink] = d0 + rc
                        par[sink] = bv
                for u in range(n):
                    if x[u, i] == 1:
                        rc = theta[u, i] + pi[bv] - pi[1 + u]
                        if rc < 0.0:
                            rc = 0.0
                        if d0 + rc < dist[1 + u]:
                            dist[1 + u] = d0 + rc
                            par[1 + u] = bv

        if dist[sink] == INF:
            break
        if dist[sink] + pi[sink] - pi[src] >= -eps:
            break  # no augmentation improves the objective

        # every path crosses the bipartite cut on a capacity-1 edge,
        # so each augmentation pushes exactly one unit
        v = sink
        while v != src:
            p = par[v]
            if v == sink:
                f_sink[p - n - 1] += 1
            elif p == src:
                f_src[v - 1] += 1
            elif p <= n:
                x[p - 1, v - n - 1] = 1
            else:
                x[v - 1, p - n - 1] = 0
            v = p

        ds = dist[sink]
        for v in range(n_nodes):
            pi[v] += dist[v] if dist[v] < INF else ds

    value = 0.0
    for u in range(n):
        for i in range(m):
            if x[u, i] == 1:
                value += theta[u, i]
    return x, value


def solve_exact(theta, profile: ConstraintProfile):
    """Maximize <X, theta> over feasible binary allocations, exactly.

    Returns (allocation, optimal value). Entries with theta <= 0 are never
    allocated. theta may hold arbitrary finite reals (e.g. price-adjusted or
    optimistic values).
    """
    th = np.ascontiguousarray(theta, dtype=np.float64)
    if th.ndim != 2:
        raise DimensionMismatchError(f"theta must be 2-D, got shape {th.shape}")
    if th.shape != (profile.n_users, profile.n_items):
        raise DimensionMismatchError(
            f"theta shape {th.shape} does not match profile "
            f"({profile.n_users}, {profile.n_items})"
        )
    if not np.all(np.isfinite(th)):
        raise ValueError("theta contains non-finite entries")
    x, value = _ssp_flow(th, profile.capacities, profile.demands, COST_EPS)
    return x, float(value)


def brute_force_allocation(theta, profile: ConstraintProfile):
    """Exhaustive oracle for small instances (n_users * n_items <= 20).

    Enumerates every binary matrix, filters by feasibility and returns a
    maximizer; ties break toward the lexicographically smallest flattened
    matrix so the result is unique.
    """
    th = np.asarray(theta, dtype=np.float64)
    n, m = th.shape
    if n * m > 20:
        raise ValueError(f"instance {n}x{m} too large for enumeration (limit 20 cells)")
    best_v = -np.inf
    best = None
    for bits in product((0, 1), repeat=n * m):
        x = np.array(bits, dtype=np.int8).reshape(n, m)
        if np.any(x.sum(axis=1) > profile.demands):
            continue
        if np.any(x.sum(axis=0) > profile.capacities):
            continue
        v = float(np.sum(th[x == 1]))
        if v > best_v + 1e-15:
            best_v = v
            best = x
        # product() emits flattened matrices in lexicographic order, so the
        # first maximizer seen is already the tie-break winner
    return best, best_v


def user_best_response(theta_row, prices, demand: int):
    """One user's demand under posted prices.

    Picks up to `demand` items maximizing the adjusted value theta_i - price_i,
    skipping items whose adjusted value is not strictly positive. Ties break
    toward the lowest item index.
    """
    row = np.asarray(theta_row, dtype=np.float64)
    lam = np.asarray(prices, dtype=np.float64)
    if row.shape != lam.shape:
        raise DimensionMismatchError(f"theta row {row.shape} vs prices {lam.shape}")
    out = np.zeros(row.shape[0], dtype=np.int8)
    if demand <= 0:
        return out
    adj = row - lam
    order = np.argsort(-adj, kind="stable")
    for i in order[:demand]:
        if adj[i] > 0.0:
            out[i] = 1
    return out


def check_prices(prices):
    lam = np.asarray(prices, dtype=np.float64)
    if lam.ndim != 1:
        raise DimensionMismatchError("prices must be a 1-D vector")
    if lam.min(initial=0.0) < 0.0:
        raise ValueError("prices must be nonnegative")
    return lam


@dataclass
class DualSolveReport:
    """Outcome of the price-iteration solve.

    `repaired` marks runs where the subgradient loop terminated without a
    feasible aggregate allocation and the exact solver restored feasibility;
    prices then still report the last subgradient iterate.
    """

    allocation: np.ndarray
    prices: np.ndarray
    iterations: int
    converged: bool
    repaired: bool
    dual_value: float
    primal_value: float


def _all_best_responses(theta, prices, demands):
    n, m = theta.shape
    x = np.zeros((n, m), dtype=np.int8)
    adj = theta - prices[None, :]
    order = np.argsort(-adj, axis=1, kind="stable")
    for u in range(n):
        d = int(demands[u])
        if d <= 0:
            continue
        for i in order[u, :d]:
            if adj[u, i] > 0.0:
                x[u, i] = 1
    return x


def dual_price_iteration(theta, profile: ConstraintProfile, step_size=None,
                         max_iters: int = 2000, tol: float = 0.0,
                         patience: int = 5) -> DualSolveReport:
    """Projected subgradient ascent on item prices.

    Each iteration collects all user best responses at the current prices and
    updates lambda <- max(0, lambda - step * (c - sum_u x_u)). Convergence is
    declared once every capacity violation stays <= tol for `patience`
    consecutive iterations. If the loop exhausts `max_iters` with an
    infeasible aggregate allocation, the exact solver repairs the primal.
    """
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (profile.n_users, profile.n_items):
        raise DimensionMismatchError(
            f"theta shape {th.shape} does not match profile "
            f"({profile.n_users}, {profile.n_items})"
        )
    if step_size is None:
        step_size = 0.05 * max(float(np.abs(th).max()), 1e-12)
    if step_size <= 0:
        raise ValueError("step_size must be positive")

    caps = profile.capacities.astype(np.float64)
    lam = np.zeros(profile.n_items, dtype=np.float64)
    x = np.zeros((profile.n_users, profile.n_items), dtype=np.int8)
    streak = 0
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        x = _all_best_responses(th, lam, profile.demands)
        load = x.sum(axis=0, dtype=np.int64)
        excess = load - profile.capacities
        if np.all(excess <= tol):
            streak += 1
            if streak >= patience:
                converged = True
                break
        else:
            streak = 0
        lam = np.maximum(0.0, lam - step_size * (caps - load))

    # dual objective at the final prices: sum of user best-response values
    # plus lambda^T c (the Lagrangian with the capacity term split out);
    # recomputed because lam may have been updated after x was formed
    x_dual = _all_best_responses(th, lam, profile.demands)
    adj = th - lam[None, :]
    response_value = float(np.sum(adj[x_dual == 1]))
    dual_value = response_value + float(lam @ caps)

    repaired = False
    if not validate_allocation(x, profile).feasible:
        x, _ = solve_exact(th, profile)
        repaired = True
    primal_value = allocation_value(x, th)

    return DualSolveReport(allocation=x, prices=lam, iterations=iterations,
                           converged=converged, repaired=repaired,
                           dual_value=dual_value, primal_value=primal_value)
