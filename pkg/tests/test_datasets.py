import os

import numpy as np
import pytest

from capbandit.datasets import (
    RatingsParseError,
    SparseRatings,
    complete_matrix,
    load_movielens,
    load_rc,
    observed_rmse,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
ML_FIXTURE = os.path.join(FIXTURES, "mini_u.data")
RC_FIXTURE = os.path.join(FIXTURES, "mini_rating_final.csv")

# canonical MovieLens 100k file, exercised only when present locally
ML_CANONICAL = os.environ.get("MOVIELENS_100K_PATH", "/root/data/ml-100k/u.data")


# -- movielens loader -----------------------------------------------------------

def test_movielens_fixture_triples():
    ratings = load_movielens(ML_FIXTURE)
    # ids are 1-based in the file, 0-based in triples
    assert (195, 241, 5.0) in ratings.triples  # duplicate kept latest timestamp
    assert (185, 301, 3.0) in ratings.triples
    assert ratings.rating_range == (1.0, 5.0)
    # the duplicate (196, 242) pair collapses to one triple
    assert len(ratings.triples) == 10
    assert ratings.n_users == 305 and ratings.n_items == 474


def test_movielens_duplicate_keeps_latest_timestamp(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t1\t5\t100\n1\t1\t2\t200\n1\t1\t3\t50\n")
    ratings = load_movielens(path)
    assert ratings.triples == [(0, 0, 2.0)]


def test_movielens_empty_file_rejected(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("")
    with pytest.raises(RatingsParseError):
        load_movielens(path)


def test_movielens_malformed_lines_carry_line_numbers(tmp_path):
    path = tmp_path / "u.data"
    path.write_text("1\t1\t5\t100\n1\t2\t9\t100\n")
    with pytest.raises(RatingsParseError, match=":2:"):
        load_movielens(path)
    path.write_text("1\t1\t5\n")
    with pytest.raises(RatingsParseError, match="4 tab-separated"):
        load_movielens(path)
    path.write_text("x\t1\t5\t100\n")
    with pytest.raises(RatingsParseError, match="non-numeric"):
        load_movielens(path)


@pytest.mark.skipif(not os.path.exists(ML_CANONICAL),
                    reason="canonical MovieLens 100k file not present")
def test_movielens_canonical_counts():
    ratings = load_movielens(ML_CANONICAL)
    assert len(ratings.triples) == 100000
    assert ratings.n_users == 943 and ratings.n_items == 1682


# -- rc loader --------------------------------------------------------------------

def test_rc_fixture_loads_and_reindexes():
    ratings = load_rc(RC_FIXTURE)
    assert ratings.rating_range == (0.0, 2.0)
    assert ratings.n_users == 6 and ratings.n_items == 6
    # first appearance order: U1077 -> 0, place 135085 -> 0
    assert ratings.triples[0] == (0, 0, 2.0)
    assert len(ratings.triples) == 10


def test_rc_rating_two_maps_identically():
    ratings = load_rc(RC_FIXTURE)
    assert any(r == 2.0 for _, _, r in ratings.triples)


def test_rc_header_only_rejected(tmp_path):
    path = tmp_path / "rating_final.csv"
    path.write_text("userID,placeID,rating\n")
    with pytest.raises(RatingsParseError, match="no ratings"):
        load_rc(path)


def test_rc_missing_column_rejected(tmp_path):
    path = tmp_path / "rating_final.csv"
    path.write_text("userID,rating\nU1,2\n")
    with pytest.raises(RatingsParseError, match="placeID"):
        load_rc(path)


def test_rc_out_of_range_rating_rejected(tmp_path):
    path = tmp_path / "rating_final.csv"
    path.write_text("userID,placeID,rating\nU1,10,3\n")
    with pytest.raises(RatingsParseError, match="not in"):
        load_rc(path)


def test_loader_round_trip(tmp_path):
    ratings = load_movielens(ML_FIXTURE)
    path = tmp_path / "u.data"
    with open(path, "w") as fh:
        for u, i, r in ratings.triples:
            fh.write(f"{u + 1}\t{i + 1}\t{int(r)}\t0\n")
    again = load_movielens(path)
    assert again.triples == ratings.triples


# -- completion ----------------------------------------------------------------------

def _fully_observed(theta, lo, hi):
    n, m = theta.shape
    triples = [(u, i, float(theta[u, i])) for u in range(n) for i in range(m)]
    return SparseRatings(triples=triples, n_users=n, n_items=m, rating_range=(lo, hi))


def test_completion_recovers_exact_rank1():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.5, 1.4, size=(6, 1))
    q = rng.uniform(0.5, 1.4, size=(5, 1))
    theta = p @ q.T  # entries within (0.25, ~2)
    ratings = _fully_observed(theta, 0.0, 2.0)
    out = complete_matrix(ratings, rank=1, reg=1e-6, sweeps=50, rng=1)
    assert np.max(np.abs(out - theta)) < 1e-3


def test_completion_full_rank_reproduces_matrix():
    rng = np.random.default_rng(2)
    theta = rng.uniform(0.2, 1.8, size=(4, 4))
    ratings = _fully_observed(theta, 0.0, 2.0)
    out = complete_matrix(ratings, rank=4, reg=1e-9, sweeps=200, rng=3)
    assert np.max(np.abs(out - theta)) < 1e-6


def test_completion_respects_rating_bounds_and_determinism():
    ratings = load_rc(RC_FIXTURE)
    a = complete_matrix(ratings, rank=2, reg=0.1, sweeps=15, rng=5)
    b = complete_matrix(ratings, rank=2, reg=0.1, sweeps=15, rng=5)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 2.0
    assert a.shape == (ratings.n_users, ratings.n_items)


def test_completion_training_rmse_decreases_with_sweeps():
    # identical seeds make each sweep count a prefix of the same trajectory
    rng = np.random.default_rng(0)
    p = rng.uniform(0.5, 1.4, size=(8, 2))
    q = rng.uniform(0.5, 1.4, size=(6, 2))
    theta = p @ q.T
    mask = rng.uniform(size=(8, 6)) < 0.7
    triples = [(u, i, float(theta[u, i]))
               for u in range(8) for i in range(6) if mask[u, i]]
    ratings = SparseRatings(triples=triples, n_users=8, n_items=6,
                            rating_range=(0.0, 5.0))
    errs = [observed_rmse(ratings, complete_matrix(ratings, rank=2, reg=1e-4,
                                                   sweeps=s, rng=7))
            for s in (1, 2, 3, 5, 8, 12, 20, 30)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_completion_rejects_bad_inputs():
    ratings = load_rc(RC_FIXTURE)
    with pytest.raises(ValueError):
        complete_matrix(ratings, rank=100)
    empty = SparseRatings(triples=[], n_users=2, n_items=2, rating_range=(0, 1))
    with pytest.raises(ValueError):
        complete_matrix(empty, rank=1)
