"""Capacity-constrained interactive recommendation simulator.

Low-rank optimistic bandit policies, exact allocation under per-item
capacities and per-user demands, dual-decomposition pricing, baselines,
and a reproducible regret-experiment harness.
"""

from .allocation import (
    DualSolveReport,
    brute_force_allocation,
    dual_price_iteration,
    solve_exact,
    user_best_response,
)
from .config import ConfigError, ExperimentConfig, parse_config
from .datasets import SparseRatings, complete_matrix, load_movielens, load_rc
from .environment import (
    World,
    WorldConfig,
    apply_capacity_drop,
    derive_rng,
    gen_synthetic_theta,
    sample_constraints,
    sample_rewards,
)
from .lowrank import (
    ConfidenceSpec,
    FactorPair,
    als_least_squares,
    beta_star,
    beta_star_value,
    covering_log_bound,
    empirical_norm_sq,
    optimistic_allocation,
    practical_beta,
    project_to_confidence,
)
from .model import (
    ConstraintProfile,
    DimensionMismatchError,
    Hyperparams,
    ObservationLog,
    allocation_to_pairs,
    allocation_value,
    pairs_to_allocation,
    round_regret,
    validate_allocation,
)
from .policies import (
    AcfPolicy,
    CucbPolicy,
    Icf2Policy,
    IcfPolicy,
    LRCombPolicy,
    Policy,
    RoundFeedback,
    cucb_index,
    make_policy,
)
from .runner import RoundRecord, read_csv, run_experiment, write_csv

__version__ = "0.1.0"
