"""Loaders for the MovieLens 100k and Restaurant-Consumer rating files, and
rank-R matrix completion to turn sparse ratings into dense reward matrices.

Files are always read from local paths; nothing is downloaded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class RatingsParseError(ValueError):
    """Malformed ratings file; message carries the offending line number."""


@dataclass
class SparseRatings:
    """Deduplicated (user, item, rating) triples with dense 0-based indices."""

    triples: list          # (user, item, rating)
    n_users: int
    n_items: int
    rating_range: tuple    # (lo, hi)

    def __post_init__(self):
        lo, hi = self.rating_range
        for u, i, r in self.triples:
            if not (0 <= u < self.n_users and 0 <= i < self.n_items):
                raise ValueError(f"triple ({u}, {i}) out of bounds")
            if not lo <= r <= hi:
                raise ValueError(f"rating {r} outside [{lo}, {hi}]")


def load_movielens(path) -> SparseRatings:
    """Parse a MovieLens 100k `u.data` file.

    Tab-separated `user_id item_id rating timestamp` lines with 1-based ids;
    duplicate (user, item) pairs keep the rating with the latest timestamp.
    """
    latest = {}  # (u, i) -> (timestamp, rating)
    max_u = -1
    max_i = -1
    n_lines = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise RatingsParseError(f"{path}:{lineno}: expected 4 tab-separated fields, "
                                        f"got {len(parts)}")
            try:
                uid, iid, rating, ts = (int(parts[0]), int(parts[1]),
                                        float(parts[2]), int(parts[3]))
            except ValueError:
                raise RatingsParseError(f"{path}:{lineno}: non-numeric field") from None
            if uid < 1 or iid < 1:
                raise RatingsParseError(f"{path}:{lineno}: ids must be 1-based positive")
            if not 1.0 <= rating <= 5.0:
                raise RatingsParseError(f"{path}:{lineno}: rating {rating} outside [1, 5]")
            n_lines += 1
            key = (uid - 1, iid - 1)
            if key not in latest or ts >= latest[key][0]:
                latest[key] = (ts, rating)
            max_u = max(max_u, uid - 1)
            max_i = max(max_i, iid - 1)
    if n_lines == 0:
        raise RatingsParseError(f"{path}: no ratings found")
    triples = [(u, i, r) for (u, i), (_, r) in sorted(latest.items())]
    return SparseRatings(triples=triples, n_users=max_u + 1, n_items=max_i + 1,
                         rating_range=(1.0, 5.0))


def load_rc(path) -> SparseRatings:
    """Parse a Restaurant-Consumer `rating_final.csv` file.

    Comma-separated with a header; requires userID, placeID, and rating
    columns (overall rating in {0, 1, 2}). Identifiers are re-indexed
    densely in first-appearance order; extra columns are ignored.
    """
    users: dict = {}
    items: dict = {}
    latest = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("userID", "placeID", "rating"):
            if col not in header:
                raise RatingsParseError(f"{path}: missing required column {col!r}")
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            raw = row["rating"]
            try:
                rating = float(raw)
            except (TypeError, ValueError):
                raise RatingsParseError(f"{path}:{lineno}: non-numeric rating {raw!r}") from None
            if rating not in (0.0, 1.0, 2.0):
                raise RatingsParseError(f"{path}:{lineno}: rating {raw} not in {{0, 1, 2}}")
            u = users.setdefault(row["userID"], len(users))
            i = items.setdefault(row["placeID"], len(items))
            latest[(u, i)] = rating  # duplicates keep the last occurrence
            n_rows += 1
    if n_rows == 0:
        raise RatingsParseError(f"{path}: no ratings found")
    triples = [(u, i, r) for (u, i), r in sorted(latest.items())]
    return SparseRatings(triples=triples, n_users=len(users), n_items=len(items),
                         rating_range=(0.0, 2.0))


def complete_matrix(ratings: SparseRatings, rank: int, reg: float = 0.1,
                    sweeps: int = 20, rng=None):
    """Dense reward matrix via rank-R alternating least squares completion.

    Minimizes sum over observed (p_u . q_i - r)^2 + reg (||P||_F^2 +
    ||Q||_F^2); the result is clipped to the rating range. Deterministic for
    a fixed seed.
    """
    n, m = ratings.n_users, ratings.n_items
    if rank > min(n, m):
        raise ValueError(f"rank {rank} exceeds min(n_users, n_items)")
    if not ratings.triples:
        raise ValueError("cannot complete a matrix with zero observations")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    users = np.array([t[0] for t in ratings.triples], dtype=np.int64)
    items = np.array([t[1] for t in ratings.triples], dtype=np.int64)
    vals = np.array([t[2] for t in ratings.triples], dtype=np.float64)
    lo, hi = ratings.rating_range

    scale = np.sqrt(max(hi, 1.0) / rank)
    p = rng.uniform(0.0, scale, size=(n, rank))
    q = rng.uniform(0.0, scale, size=(m, rank))

    def half_sweep(fixed, own_dim, rows, cols):
        # rows index the side being solved, cols the fixed side
        f = fixed[cols]                                  # (n_obs, rank)
        lhs = np.zeros((own_dim, rank, rank))
        np.add.at(lhs, rows, f[:, :, None] * f[:, None, :])
        lhs += reg * np.eye(rank)[None, :, :]
        rhs = np.zeros((own_dim, rank))
        np.add.at(rhs, rows, vals[:, None] * f)
        return np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]

    for _ in range(sweeps):
        p = half_sweep(q, n, users, items)
        q = half_sweep(p, m, items, users)

    return np.clip(p @ q.T, lo, hi)


def observed_rmse(ratings: SparseRatings, theta) -> float:
    """Root mean squared error of a dense matrix on the observed triples."""
    th = np.asarray(theta, dtype=np.float64)
    errs = [th[u, i] - r for u, i, r in ratings.triples]
    return float(np.sqrt(np.mean(np.square(errs))))
