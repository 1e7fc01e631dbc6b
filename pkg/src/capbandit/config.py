"""Experiment configuration: schema, defaults, and a validating parser.

Config files are YAML (JSON is a YAML subset) with three sections:

    world:                  # required
      type: synthetic       # synthetic | movielens | rc
      n_users: 60           # synthetic: required dimensions
      n_items: 30
      rank: 3
      B: 10.0
      eta: 1.0
      dynamics: static      # static | dynamic
      p_active: 0.2
      c_max: null           # optional fixed capacity ceiling
      include_zero_capacity: false
      noise_scale: 0.0
      path: data/u.data     # dataset worlds: ratings file
      completion_rank: 20   # dataset worlds: completion parameters
      completion_reg: 0.1
      completion_sweeps: 20
    policies:               # required, nonempty
      - kind: lrcomb        # lrcomb | acf | cucb | icf | icf2
        name: lrcomb        # optional display name (must be unique)
        kappa: 1.0          # lrcomb: confidence multiplier
        mode: fast          # lrcomb: fast | alternating
        prior_mean: 5.0     # lrcomb/acf: initial estimate level (default B/2)
        gamma: 1.0          # lrcomb/acf/icf*: least-squares regularizer
        rank: 3             # lrcomb/acf/icf*: model rank (default: world rank)
        scale: 1.5          # cucb: bonus scale
        refit_every: 5      # icf/icf2: feature refit period
        ridge_reg: 1.0      # icf/icf2: per-user ridge regularizer
        kappa_icf: 1.0      # icf/icf2: exploration weight
    runner:
      horizon: 100
      n_seeds: 1
      master_seed: 0
      output_path: results.csv
      emit_per_round: true
      record_runtime: true
      threads: 1
      init_samples: 0.1   # one-shot samples for the initial rough estimate

Unknown keys, wrong types, and missing required fields raise ConfigError
with a path-qualified message.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml


class ConfigError(ValueError):
    pass


_WORLD_TYPES = ("synthetic", "movielens", "rc")
_POLICY_KINDS = ("lrcomb", "acf", "cucb", "icf", "icf2")
_DATASET_B = {"movielens": 5.0, "rc": 2.0}
_DATASET_RANK = {"movielens": 20, "rc": 5}


@dataclass
class WorldSpec:
    type: str = "synthetic"
    n_users: int = 0
    n_items: int = 0
    rank: int = 2
    B: float = 10.0
    eta: float = 1.0
    dynamics: str = "static"
    p_active: float = 0.2
    c_max: int | None = None
    include_zero_capacity: bool = False
    noise_scale: float = 0.0
    path: str | None = None
    completion_rank: int = 20
    completion_reg: float = 0.1
    completion_sweeps: int = 20


@dataclass
class PolicySpec:
    kind: str
    name: str
    params: dict = field(default_factory=dict)
    gamma: float = 1.0
    rank: int | None = None


@dataclass
class ExperimentConfig:
    world: WorldSpec
    policies: list
    horizon: int = 100
    n_seeds: int = 1
    master_seed: int = 0
    output_path: str = "results.csv"
    emit_per_round: bool = True
    record_runtime: bool = True
    threads: int = 1
    init_samples: float = 0.1   # one-shot sampled pairs for the initial estimate
                                # (< 1: fraction of all pairs; >= 1: count; 0: off)


def _require(mapping, key, path):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}: missing required field")
    return mapping[key]


def _typed(value, types, path):
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
        name = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}: expected {name}, got {type(value).__name__} ({value!r})")
    return value


def _check_unknown(mapping, allowed, path):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def _parse_world(raw) -> WorldSpec:
    if not isinstance(raw, dict):
        raise ConfigError("world: expected a mapping")
    allowed = {"type", "n_users", "n_items", "rank", "B", "eta", "dynamics",
               "p_active", "c_max", "include_zero_capacity", "noise_scale",
               "path", "completion_rank", "completion_reg", "completion_sweeps"}
    _check_unknown(raw, allowed, "world")
    wtype = raw.get("type", "synthetic")
    if wtype not in _WORLD_TYPES:
        raise ConfigError(f"world.type: unknown world type {wtype!r}; "
                          f"expected one of {_WORLD_TYPES}")
    spec = WorldSpec(type=wtype)
    if wtype == "synthetic":
        spec.n_users = _typed(_require(raw, "n_users", "world"), int, "world.n_users")
        spec.n_items = _typed(_require(raw, "n_items", "world"), int, "world.n_items")
        spec.rank = _typed(raw.get("rank", 2), int, "world.rank")
        spec.B = _typed(raw.get("B", 10.0), float, "world.B")
    else:
        spec.path = _typed(_require(raw, "path", "world"), str, "world.path")
        spec.completion_rank = _typed(raw.get("completion_rank", _DATASET_RANK[wtype]),
                                      int, "world.completion_rank")
        spec.completion_reg = _typed(raw.get("completion_reg", 0.1), float,
                                     "world.completion_reg")
        spec.completion_sweeps = _typed(raw.get("completion_sweeps", 20), int,
                                        "world.completion_sweeps")
        spec.B = _typed(raw.get("B", _DATASET_B[wtype]), float, "world.B")
        spec.rank = _typed(raw.get("rank", spec.completion_rank), int, "world.rank")
    spec.eta = _typed(raw.get("eta", 1.0), float, "world.eta")
    spec.dynamics = _typed(raw.get("dynamics", "static"), str, "world.dynamics")
    if spec.dynamics not in ("static", "dynamic"):
        raise ConfigError(f"world.dynamics: expected static or dynamic, got {spec.dynamics!r}")
    spec.p_active = _typed(raw.get("p_active", 0.2), float, "world.p_active")
    if not 0.0 <= spec.p_active <= 1.0:
        raise ConfigError("world.p_active: must lie in [0, 1]")
    if raw.get("c_max") is not None:
        spec.c_max = _typed(raw["c_max"], int, "world.c_max")
    spec.include_zero_capacity = _typed(raw.get("include_zero_capacity", False),
                                        bool, "world.include_zero_capacity")
    spec.noise_scale = _typed(raw.get("noise_scale", 0.0), float, "world.noise_scale")
    return spec


_POLICY_PARAM_KEYS = {
    "lrcomb": {"kappa", "mode", "prior_mean"},
    "acf": {"prior_mean"},
    "cucb": {"scale"},
    "icf": {"refit_every", "ridge_reg", "kappa_icf"},
    "icf2": {"refit_every", "ridge_reg", "kappa_icf"},
}


def _parse_policy(raw, idx) -> PolicySpec:
    path = f"policies[{idx}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    kind = _typed(_require(raw, "kind", path), str, f"{path}.kind").lower()
    if kind not in _POLICY_KINDS:
        raise ConfigError(f"{path}.kind: unknown policy {kind!r}; "
                          f"expected one of {_POLICY_KINDS}")
    allowed = {"kind", "name", "gamma", "rank"} | _POLICY_PARAM_KEYS[kind]
    _check_unknown(raw, allowed, path)
    name = _typed(raw.get("name", kind), str, f"{path}.name")
    spec = PolicySpec(kind=kind, name=name)
    spec.gamma = _typed(raw.get("gamma", 1.0), float, f"{path}.gamma")
    if raw.get("rank") is not None:
        spec.rank = _typed(raw["rank"], int, f"{path}.rank")
    params = {}
    if kind in ("lrcomb", "acf") and raw.get("prior_mean") is not None:
        params["prior_mean"] = _typed(raw["prior_mean"], float, f"{path}.prior_mean")
    if kind == "lrcomb":
        params["kappa"] = _typed(raw.get("kappa", 1.0), float, f"{path}.kappa")
        params["mode"] = _typed(raw.get("mode", "fast"), str, f"{path}.mode")
        if params["mode"] not in ("fast", "alternating"):
            raise ConfigError(f"{path}.mode: expected fast or alternating")
    elif kind == "cucb":
        params["scale"] = _typed(raw.get("scale", 1.5), float, f"{path}.scale")
    elif kind in ("icf", "icf2"):
        params["refit_every"] = _typed(raw.get("refit_every", 5), int, f"{path}.refit_every")
        params["ridge_reg"] = _typed(raw.get("ridge_reg", 1.0), float, f"{path}.ridge_reg")
        params["kappa_icf"] = _typed(raw.get("kappa_icf", 1.0), float, f"{path}.kappa_icf")
    spec.params = params
    return spec


def parse_config_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a mapping")
    _check_unknown(raw, {"world", "policies", "runner"}, "config")
    world = _parse_world(_require(raw, "world", "config"))

    raw_policies = _require(raw, "policies", "config")
    if not isinstance(raw_policies, list) or not raw_policies:
        raise ConfigError("policies: expected a nonempty list")
    policies = [_parse_policy(p, i) for i, p in enumerate(raw_policies)]
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ConfigError("policies: display names must be unique "
                          "(set `name` when repeating a kind)")

    runner = raw.get("runner", {})
    if not isinstance(runner, dict):
        raise ConfigError("runner: expected a mapping")
    allowed = {"horizon", "n_seeds", "master_seed", "output_path",
               "emit_per_round", "record_runtime", "threads", "init_samples"}
    _check_unknown(runner, allowed, "runner")
    cfg = ExperimentConfig(world=world, policies=policies)
    cfg.horizon = _typed(runner.get("horizon", 100), int, "runner.horizon")
    cfg.n_seeds = _typed(runner.get("n_seeds", 1), int, "runner.n_seeds")
    cfg.master_seed = _typed(runner.get("master_seed", 0), int, "runner.master_seed")
    cfg.output_path = _typed(runner.get("output_path", "results.csv"), str,
                             "runner.output_path")
    cfg.emit_per_round = _typed(runner.get("emit_per_round", True), bool,
                                "runner.emit_per_round")
    cfg.record_runtime = _typed(runner.get("record_runtime", True), bool,
                                "runner.record_runtime")
    cfg.threads = _typed(runner.get("threads", 1), int, "runner.threads")
    cfg.init_samples = _typed(runner.get("init_samples", 0.1), float,
                              "runner.init_samples")
    if cfg.horizon < 1:
        raise ConfigError("runner.horizon: must be >= 1")
    if cfg.n_seeds < 1:
        raise ConfigError("runner.n_seeds: must be >= 1")
    if cfg.threads < 1:
        raise ConfigError("runner.threads: must be >= 1")
    if cfg.init_samples < 0:
        raise ConfigError("runner.init_samples: must be >= 0")
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Load and validate an experiment config file (YAML or JSON)."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    return parse_config_dict(raw)
