import math

import numpy as np
import pytest

from capbandit.environment import (
    World,
    WorldConfig,
    apply_capacity_drop,
    derive_rng,
    gen_synthetic_theta,
    sample_constraints,
    sample_rewards,
)
from capbandit.model import ConstraintProfile, validate_allocation


def test_theta_single_cell_equals_bound():
    cfg = WorldConfig(n_users=1, n_items=1, rank=1, B=7.5)
    theta = gen_synthetic_theta(cfg, np.random.default_rng(0))
    assert theta.shape == (1, 1)
    assert theta[0, 0] == pytest.approx(7.5)


def test_theta_range_rank_and_determinism():
    cfg = WorldConfig(n_users=12, n_items=9, rank=3, B=10.0)
    t1 = gen_synthetic_theta(cfg, np.random.default_rng(42))
    t2 = gen_synthetic_theta(cfg, np.random.default_rng(42))
    assert np.array_equal(t1, t2)
    assert t1.min() >= 0.0 and t1.max() == pytest.approx(10.0)
    sv = np.linalg.svd(t1, compute_uv=False)
    assert np.sum(sv > 1e-9) <= 3


def test_theta_rejects_oversized_rank():
    cfg = WorldConfig(n_users=2, n_items=2, rank=3)
    with pytest.raises(ValueError):
        gen_synthetic_theta(cfg, np.random.default_rng(0))


def test_static_constraints_follow_capacity_rule():
    cfg = WorldConfig(n_users=4, n_items=2, rank=1, dynamics="static")
    rng = np.random.default_rng(1)
    for _ in range(50):
        prof = sample_constraints(cfg, rng, 1)
        assert prof.demands.tolist() == [1, 1, 1, 1]
        # C_max = ceil(3 * 4 / 2) = 6, support {1..6}
        assert np.all(prof.capacities >= 1) and np.all(prof.capacities <= 6)


def test_dynamic_constraints_degenerate_demand():
    cfg = WorldConfig(n_users=5, n_items=3, rank=1, dynamics="dynamic", p_active=0.0)
    prof = sample_constraints(cfg, np.random.default_rng(2), 1)
    assert prof.demands.sum() == 0
    # capacity ceiling floored at one so the support stays nonempty
    assert np.all(prof.capacities >= 1) and np.all(prof.capacities <= 1)


def test_dynamic_constraints_scale_with_demand():
    cfg = WorldConfig(n_users=30, n_items=4, rank=1, dynamics="dynamic", p_active=0.5)
    rng = np.random.default_rng(3)
    for t in range(20):
        prof = sample_constraints(cfg, rng, t + 1)
        c_max = max(1, math.ceil(3 * prof.demands.sum() / 4))
        assert np.all(prof.capacities >= 1)
        assert np.all(prof.capacities <= c_max)
        assert set(np.unique(prof.demands)).issubset({0, 1})


def test_include_zero_capacity_flag():
    cfg = WorldConfig(n_users=6, n_items=5, rank=1, include_zero_capacity=True)
    rng = np.random.default_rng(4)
    seen_zero = False
    for _ in range(200):
        prof = sample_constraints(cfg, rng, 1)
        seen_zero = seen_zero or bool(np.any(prof.capacities == 0))
    assert seen_zero


def test_rewards_no_noise_equal_means():
    theta = np.array([[1.0, 2.0], [3.0, 4.0]])
    x = np.array([[1, 0], [0, 1]])
    out = sample_rewards(theta, x, 0.0, np.random.default_rng(0))
    assert out == [(0, 0, 1.0), (1, 1, 4.0)]


def test_rewards_empty_allocation():
    theta = np.ones((2, 2))
    assert sample_rewards(theta, np.zeros((2, 2), dtype=int), 1.0,
                          np.random.default_rng(0)) == []


def test_rewards_monte_carlo_mean():
    theta = np.array([[3.0]])
    x = np.array([[1]])
    rng = np.random.default_rng(7)
    draws = [sample_rewards(theta, x, 1.0, rng)[0][2] for _ in range(100000)]
    assert abs(np.mean(draws) - 3.0) < 0.02  # 5 sigma over 1e5 draws


def test_capacity_drop_identity_when_feasible():
    prof = ConstraintProfile(capacities=[2, 2], demands=[1, 1])
    x = np.array([[1, 0], [0, 1]])
    realized, dropped = apply_capacity_drop(x, prof, np.random.default_rng(0))
    assert np.array_equal(realized, x) and dropped == []


def test_capacity_drop_keeps_exact_capacity():
    prof = ConstraintProfile(capacities=[1], demands=[1, 1, 1])
    x = np.ones((3, 1), dtype=int)
    realized, dropped = apply_capacity_drop(x, prof, np.random.default_rng(1))
    assert realized.sum() == 1 and len(dropped) == 2
    assert validate_allocation(realized, prof).feasible


def test_capacity_drop_zero_capacity_drops_all():
    prof = ConstraintProfile(capacities=[0], demands=[1, 1])
    x = np.ones((2, 1), dtype=int)
    realized, dropped = apply_capacity_drop(x, prof, np.random.default_rng(2))
    assert realized.sum() == 0 and len(dropped) == 2


def test_capacity_drop_uniform_over_requesters():
    prof = ConstraintProfile(capacities=[1], demands=[1, 1, 1])
    x = np.ones((3, 1), dtype=int)
    rng = np.random.default_rng(3)
    kept = np.zeros(3)
    trials = 10000
    for _ in range(trials):
        realized, _ = apply_capacity_drop(x, prof, rng)
        kept[np.nonzero(realized[:, 0])[0][0]] += 1
    freq = kept / trials
    assert np.all(np.abs(freq - 1.0 / 3.0) < 0.02)


def test_capacity_drop_always_feasible():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n, m = 6, 4
        prof = ConstraintProfile(capacities=rng.integers(0, 3, size=m),
                                 demands=np.ones(n, dtype=np.int64))
        x = np.zeros((n, m), dtype=np.int8)
        x[np.arange(n), rng.integers(0, m, size=n)] = 1
        realized, dropped = apply_capacity_drop(x, prof, rng)
        assert validate_allocation(realized, prof).feasible
        realized_pairs = {(u, i) for u, i in zip(*np.nonzero(realized))}
        assert realized_pairs.isdisjoint(set(dropped))


def test_world_static_profile_reused():
    cfg = WorldConfig(n_users=5, n_items=3, rank=2, dynamics="static", seed=9)
    world = World(cfg)
    p1 = world.profile(1)
    p2 = world.profile(17)
    assert p1 is p2


def test_derive_rng_deterministic_and_split():
    a1 = derive_rng(100, 3, 0).uniform(size=4)
    a2 = derive_rng(100, 3, 0).uniform(size=4)
    b = derive_rng(100, 4, 0).uniform(size=4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


def test_world_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(n_users=0, n_items=1, rank=1)
    with pytest.raises(ValueError):
        WorldConfig(n_users=1, n_items=1, rank=1, p_active=1.5)
    with pytest.raises(ValueError):
        WorldConfig(n_users=1, n_items=1, rank=1, dynamics="waves")
