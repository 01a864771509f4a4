"""Experiment orchestration: config files, training/evaluation runs, CSV outputs.

A single TOML config describes the environment (either the stochastic
benchmark environment or the table-calibrated one), the reward and training
settings, and the experiment block (models, replications, evaluation budget).
Runs write deterministic CSVs: metrics.csv (final evaluations), curves.csv
(one row per epoch per replication), sweep.csv (reward-weight sweep), episode
event logs, and network checkpoints. Reruns with the same config and seed are
byte-identical apart from the timestamp comment line at the top of each CSV.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from dispatchlab import nets
from dispatchlab.features import state_dim
from dispatchlab.geometry import AreaConfig, GaussianArrivalSpec, Location
from dispatchlab.policies import (
    A2cLearner,
    DqnLearner,
    NetworkGreedyPolicy,
    PureOptimizationPolicy,
    TabularQLearner,
    TrainingConfig,
    episode_mean_reward,
)
from dispatchlab.rewards import RewardConfig, build_ledger
from dispatchlab.sim import CustomArrivals, WorldConfig, make_world, run_episode
from dispatchlab.tables import CalibratedConfig, SyntheticTablesConfig, ingest_calibrated_tables

__all__ = [
    "ConfigError",
    "EnvSpec",
    "ExperimentConfig",
    "MetricsRow",
    "load_config",
    "world_config_for",
    "make_world_factory",
    "eval_world_seeds",
    "evaluate_policy_object",
    "evaluate_policy",
    "run_experiment",
    "sweep_rho",
    "simulate_baseline",
    "dump_assignment_csv",
    "MODELS",
]

MODELS = ("pure", "tabq", "dqn", "a2c")


class ConfigError(ValueError):
    """Config validation failure; message carries the offending field path."""


@dataclass(frozen=True)
class EnvSpec:
    kind: str                       # 'custom' | 'calibrated'
    area: AreaConfig
    horizon: int
    count_scale: float = 10.0
    # custom environment
    passenger_mean: tuple = (1.2, 1.2)
    passenger_std: tuple = (0.8, 0.8)
    driver_mean: tuple = (2.8, 2.8)
    driver_std: tuple = (0.8, 0.8)
    arrival_settings: tuple = ((1.0, 1.0),)
    deterministic_counts: bool = False
    # calibrated environment
    calibrated: CalibratedConfig | None = None
    requests_file: str | None = None
    shifts_file: str | None = None
    synthetic: SyntheticTablesConfig | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    reward: RewardConfig
    training: TrainingConfig
    models: tuple = ("pure", "a2c")
    replications: int = 5
    eval_episodes: int = 50
    seed: int = 7
    rho_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class MetricsRow:
    model: str
    rho: float
    q_d: float
    q_s: float
    answer_rate: float
    mean_pickup_time_s: float
    mean_agent_reward_s: float
    epoch: int
    replication: int

    HEADER = ["model", "rho", "q_d", "q_s", "answer_rate", "mean_pickup_time_s",
              "mean_agent_reward_s", "epoch", "replication"]

    def row(self):
        return [self.model, repr(self.rho), repr(self.q_d), repr(self.q_s),
                repr(self.answer_rate), repr(self.mean_pickup_time_s),
                repr(self.mean_agent_reward_s), self.epoch, self.replication]


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

def _get(table: dict, path: str, expect, default=None, required=False):
    node = table
    parts = path.split(".")
    for p in parts[:-1]:
        node = node.get(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{path}: parent section is not a table")
    if parts[-1] not in node:
        if required:
            raise ConfigError(f"{path}: required field is missing")
        return default
    value = node[parts[-1]]
    if expect is float and isinstance(value, int):
        value = float(value)
    if expect is not None and not isinstance(value, expect):
        raise ConfigError(f"{path}: expected {getattr(expect, '__name__', expect)}, got {type(value).__name__}")
    return value


def _pair(table, path, default):
    raw = _get(table, path, list, list(default))
    if len(raw) != 2 or not all(isinstance(v, (int, float)) for v in raw):
        raise ConfigError(f"{path}: expected a pair of numbers")
    return (float(raw[0]), float(raw[1]))


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config; errors name field paths."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)

    area = AreaConfig(
        width_km=_get(doc, "area.width_km", float, 4.0),
        height_km=_get(doc, "area.height_km", float, 4.0),
        grid_rows=_get(doc, "area.grid_rows", int, 10),
        grid_cols=_get(doc, "area.grid_cols", int, 10),
        speed_kmh=_get(doc, "area.speed_kmh", float, 25.0),
        interval_seconds=_get(doc, "area.interval_seconds", float, 1.0),
    )
    kind = _get(doc, "environment.kind", str, "custom")
    if kind not in ("custom", "calibrated"):
        raise ConfigError("environment.kind: must be 'custom' or 'calibrated'")
    horizon = _get(doc, "environment.horizon", int, 30)
    if horizon < 1:
        raise ConfigError("environment.horizon: must be >= 1")

    calibrated = None
    synthetic = None
    requests_file = _get(doc, "environment.requests_file", str)
    shifts_file = _get(doc, "environment.shifts_file", str)
    if kind == "calibrated":
        calibrated = CalibratedConfig(
            area=area,
            center_lng=_get(doc, "environment.center_lng", float, 114.17),
            center_lat=_get(doc, "environment.center_lat", float, 22.30),
            window_start_epoch_s=_get(doc, "environment.window_start_epoch_s", float, 0.0),
            horizon=horizon,
            resample=_get(doc, "environment.resample", bool, False),
            bootstrap_bin_intervals=_get(doc, "environment.bootstrap_bin_intervals", int, 60),
            max_wait_intervals=_get(doc, "environment.max_wait_intervals", int),
            rate_bin_intervals=_get(doc, "environment.rate_bin_intervals", int, 60),
        )
        synthetic = SyntheticTablesConfig(
            calibrated=calibrated,
            passenger_rate=_get(doc, "synthetic.passenger_rate", float, 2.0),
            driver_rate=_get(doc, "synthetic.driver_rate", float, 2.0),
            origin_mean_km=_pair(doc, "synthetic.origin_mean_km", (6.0, 6.0)),
            origin_std_km=_pair(doc, "synthetic.origin_std_km", (3.0, 3.0)),
            dest_mean_km=_pair(doc, "synthetic.dest_mean_km", (14.0, 14.0)),
            dest_std_km=_pair(doc, "synthetic.dest_std_km", (3.0, 3.0)),
            driver_mean_km=_pair(doc, "synthetic.driver_mean_km", (10.0, 10.0)),
            driver_std_km=_pair(doc, "synthetic.driver_std_km", (4.0, 4.0)),
            shift_min_s=_get(doc, "synthetic.shift_min_s", float, 120.0),
            shift_max_s=_get(doc, "synthetic.shift_max_s", float, 1800.0),
        )

    raw_settings = _get(doc, "environment.arrival_settings", list, [[1.0, 1.0]])
    settings = []
    for k, pair in enumerate(raw_settings):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ConfigError(f"environment.arrival_settings[{k}]: expected [q_d, q_s]")
        settings.append((float(pair[0]), float(pair[1])))

    env = EnvSpec(
        kind=kind,
        area=area,
        horizon=horizon,
        count_scale=_get(doc, "environment.count_scale", float, 10.0),
        passenger_mean=_pair(doc, "environment.passenger_mean_km", (1.2, 1.2)),
        passenger_std=_pair(doc, "environment.passenger_std_km", (0.8, 0.8)),
        driver_mean=_pair(doc, "environment.driver_mean_km", (2.8, 2.8)),
        driver_std=_pair(doc, "environment.driver_std_km", (0.8, 0.8)),
        arrival_settings=tuple(settings),
        deterministic_counts=_get(doc, "environment.deterministic_counts", bool, False),
        calibrated=calibrated,
        requests_file=requests_file,
        shifts_file=shifts_file,
        synthetic=synthetic,
    )

    reward = RewardConfig(
        match_benefit=_get(doc, "reward.match_benefit_s", float, 800.0),
        rho=_get(doc, "reward.rho", float, 1.0),
        gamma=_get(doc, "reward.gamma", float, 0.99),
        expiry_penalty=_get(doc, "reward.expiry_penalty_s", float, 0.0),
    )
    hidden = _get(doc, "training.hidden", list, [512, 256, 128])
    if not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("training.hidden: expected positive integers")
    training = TrainingConfig(
        epochs=_get(doc, "training.epochs", int, 2000),
        dqn_updates_per_epoch=_get(doc, "training.dqn_updates_per_epoch", int, 50),
        a2c_updates_per_epoch=_get(doc, "training.a2c_updates_per_epoch", int, 50),
        batch_size=_get(doc, "training.batch_size", int, 256),
        target_sync_updates=_get(doc, "training.target_sync_updates", int, 100),
        replay_capacity=_get(doc, "training.replay_capacity", int, 100_000),
        q_learning_rate=_get(doc, "training.q_learning_rate", float, 1e-4),
        actor_learning_rate=_get(doc, "training.actor_learning_rate", float, 1e-4),
        critic_learning_rate=_get(doc, "training.critic_learning_rate", float, 1e-4),
        epsilon_start=_get(doc, "training.epsilon_start", float, 1.0),
        epsilon_end=_get(doc, "training.epsilon_end", float, 0.05),
        epsilon_decay_epochs=_get(doc, "training.epsilon_decay_epochs", int),
        normalize_advantage=_get(doc, "training.normalize_advantage", bool, True),
        reward_scale=_get(doc, "training.reward_scale", float),
        hidden=tuple(hidden),
        tabular_alpha=_get(doc, "training.tabular_alpha", float, 0.1),
        grad_clip_norm=_get(doc, "training.grad_clip_norm", float, 10.0),
    )
    models = tuple(_get(doc, "experiment.models", list, ["pure", "a2c"]))
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"experiment.models: unknown model {m!r} (choose from {MODELS})")
    replications = _get(doc, "experiment.replications", int, 5)
    if replications < 1:
        raise ConfigError("experiment.replications: must be >= 1")
    rho_grid = tuple(float(r) for r in _get(doc, "experiment.rho_sweep", list, [0.0, 0.25, 0.5, 0.75, 1.0]))
    for r in rho_grid:
        if not 0.0 <= r <= 1.0:
            raise ConfigError("experiment.rho_sweep: values must lie in [0, 1]")
    return ExperimentConfig(
        env=env,
        reward=reward,
        training=training,
        models=models,
        replications=replications,
        eval_episodes=_get(doc, "experiment.eval_episodes", int, 50),
        seed=_get(doc, "experiment.seed", int, 7),
        rho_grid=rho_grid,
    )


# ---------------------------------------------------------------------------
# world construction
# ---------------------------------------------------------------------------

def world_config_for(env: EnvSpec, q_d: float | None = None, q_s: float | None = None,
                     rng: np.random.Generator | None = None) -> WorldConfig:
    """Build a WorldConfig for one arrival setting (custom) or the schedule (calibrated)."""
    if env.kind == "custom":
        if q_d is None or q_s is None:
            q_d, q_s = env.arrival_settings[0]
        source = CustomArrivals(
            env.area,
            GaussianArrivalSpec(Location(*env.passenger_mean), env.passenger_std, q_d),
            GaussianArrivalSpec(Location(*env.driver_mean), env.driver_std, q_s),
            deterministic_counts=env.deterministic_counts,
        )
        # horizon arrival intervals plus one final matching round with no arrivals
        return WorldConfig(area=env.area, source=source, horizon=env.horizon + 1,
                           arrival_intervals=env.horizon, count_scale=env.count_scale)
    if not env.requests_file or not env.shifts_file:
        raise ConfigError("environment.requests_file/shifts_file: required for kind='calibrated'")
    source = ingest_calibrated_tables(env.requests_file, env.shifts_file, env.calibrated, rng)
    return WorldConfig(area=env.area, source=source, horizon=env.horizon + 1,
                       arrival_intervals=env.horizon,
                       max_wait_intervals=env.calibrated.max_wait_intervals,
                       count_scale=env.count_scale)


def make_world_factory(world_cfg: WorldConfig, base_seed: int, stream: tuple):
    """Seeded factory: epoch k gets the world seed SeedSequence((base, *stream, k))."""

    def factory(epoch: int):
        return make_world(world_cfg, np.random.SeedSequence((base_seed, *stream, epoch)))

    return factory


def eval_world_seeds(base_seed: int, setting_idx: int, n_episodes: int):
    """Held-out evaluation seeds, shared by every model for paired comparisons."""
    return [np.random.SeedSequence((base_seed, 0xE7A1, setting_idx, k)) for k in range(n_episodes)]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_policy_object(policy, world_cfg: WorldConfig, seeds, reward: RewardConfig):
    """Frozen-policy evaluation over held-out episodes; agents pooled across episodes."""
    created = matched = 0
    pickups = []
    blended = []
    for seed in seeds:
        result = run_episode(make_world(world_cfg, seed), policy, collect_states=False)
        ledger = build_ledger(result.outcomes(), reward)
        created += result.n_created
        matched += result.n_matched
        pickups.extend(result.matched_pickups)
        blended.extend(r.blended for r in ledger.rows)
    return {
        "answer_rate": matched / created if created else 0.0,
        "mean_pickup_time_s": math.fsum(pickups) / len(pickups) if pickups else float("nan"),
        "mean_agent_reward_s": math.fsum(blended) / len(blended) if blended else float("nan"),
        "n_agents": created,
    }


def evaluate_policy(checkpoint, env: EnvSpec, episodes: int, seed: int,
                    reward: RewardConfig | None = None, q_d=None, q_s=None,
                    setting_idx: int = 0) -> MetricsRow:
    """Evaluate a saved network checkpoint (or the pure baseline for checkpoint=None)."""
    reward = reward or RewardConfig()
    world_cfg = world_config_for(env, q_d, q_s)
    dim = state_dim(env.area.n_zones)
    if checkpoint is None:
        policy = PureOptimizationPolicy()
        model = "pure"
    else:
        spec, params = nets.load_checkpoint(checkpoint)
        if spec.input_dim != dim:
            raise ValueError(
                f"checkpoint input_dim {spec.input_dim} does not match environment state dim "
                f"{dim} (M={env.area.n_zones} zones)")
        policy = NetworkGreedyPolicy(params, spec)
        model = "dqn" if spec.output_head == "linear" else "a2c"
    seeds = eval_world_seeds(seed, setting_idx, episodes)
    stats = evaluate_policy_object(policy, world_cfg, seeds, reward)
    if q_d is None or q_s is None:
        q_d, q_s = (env.arrival_settings[0] if env.kind == "custom" else (float("nan"),) * 2)
    return MetricsRow(model=model, rho=reward.rho, q_d=q_d, q_s=q_s,
                      answer_rate=stats["answer_rate"],
                      mean_pickup_time_s=stats["mean_pickup_time_s"],
                      mean_agent_reward_s=stats["mean_agent_reward_s"],
                      epoch=-1, replication=0)


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="") as fh:
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def dump_assignment_csv(matrix, plan, path) -> None:
    """Debug dump of one cost matrix and the chosen plan."""
    rows = []
    n_rows, n_cols = matrix.shape
    chosen = dict(plan.pairs)
    for i in range(n_rows):
        for j in range(n_cols):
            rows.append([matrix.passenger_ids[i], matrix.driver_ids[j],
                         repr(float(matrix.costs[i, j])), int(chosen.get(i) == j)])
    _write_csv(path, ["passenger_id", "driver_id", "cost_s", "chosen"], rows)


def _write_episode_log(events, path) -> None:
    rows = [[t, event, rid, did, value] for (t, event, rid, did, value) in events]
    _write_csv(path, ["t", "event", "request_id", "driver_id", "value"], rows)


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _build_learner(model: str, cfg: ExperimentConfig, reward: RewardConfig, dim: int,
                   setting_idx: int, rep: int):
    seed = np.random.SeedSequence((cfg.seed, 0x5EED, setting_idx, rep))
    if model == "dqn":
        return DqnLearner(dim, cfg.training, reward, seed)
    if model == "a2c":
        return A2cLearner(dim, cfg.training, reward, seed)
    if model == "tabq":
        return TabularQLearner(cfg.env.horizon, cfg.env.area.n_zones, cfg.training, reward, seed)
    raise ValueError(f"unknown learner {model!r}")


def _settings(cfg: ExperimentConfig):
    if cfg.env.kind == "custom":
        return list(cfg.env.arrival_settings)
    return [(float("nan"), float("nan"))]


CURVE_HEADER = ["model", "rho", "q_d", "q_s", "replication", "epoch", "answer_rate",
                "mean_pickup_time_s", "mean_agent_reward_s", "epsilon", "loss", "n_agents"]


def _curve_row(model, rho, q_d, q_s, rep, stats):
    return [model, repr(rho), repr(q_d), repr(q_s), rep, stats.epoch,
            repr(stats.answer_rate), repr(stats.mean_pickup_s), repr(stats.mean_reward_s),
            repr(stats.epsilon), repr(stats.loss), stats.n_agents]


def _train_and_eval(model, cfg, reward, world_cfg, setting_idx, q_d, q_s, rep,
                    out_dir, curves, epochs=None, progress=None):
    """Train one learner, checkpoint it, and evaluate greedily on held-out seeds."""
    dim = state_dim(cfg.env.area.n_zones)
    learner = _build_learner(model, cfg, reward, dim, setting_idx, rep)
    factory = make_world_factory(world_cfg, cfg.seed, (0x17A1, setting_idx, rep, int(reward.rho * 100)))
    n_epochs = epochs if epochs is not None else cfg.training.epochs
    for epoch in range(n_epochs):
        stats = learner.train_epoch(factory, epoch)
        curves.append(_curve_row(model, reward.rho, q_d, q_s, rep, stats))
        if progress and (epoch + 1) % progress == 0:
            print(f"  [{model} setting={setting_idx} rep={rep} rho={reward.rho}] "
                  f"epoch {epoch + 1}/{n_epochs} reward={stats.mean_reward_s:.1f}", file=sys.stderr)
    if out_dir is not None:
        ck_dir = Path(out_dir) / "checkpoints"
        ck_dir.mkdir(parents=True, exist_ok=True)
        tag = f"{model}_s{setting_idx}_rho{int(reward.rho * 100):03d}_r{rep}"
        if model == "tabq":
            learner.dump_csv(ck_dir / f"{tag}.csv")
        else:
            learner.checkpoint(ck_dir / f"{tag}.ckpt")
    seeds = eval_world_seeds(cfg.seed, setting_idx, cfg.eval_episodes)
    stats = evaluate_policy_object(learner.greedy_policy(), world_cfg, seeds, reward)
    return MetricsRow(model=model, rho=reward.rho, q_d=q_d, q_s=q_s,
                      answer_rate=stats["answer_rate"],
                      mean_pickup_time_s=stats["mean_pickup_time_s"],
                      mean_agent_reward_s=stats["mean_agent_reward_s"],
                      epoch=n_epochs - 1, replication=rep)


def run_experiment(cfg: ExperimentConfig, out_dir, epochs=None, progress=None):
    """Train/evaluate every requested model on every arrival setting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics: list[MetricsRow] = []
    curves: list = []
    for setting_idx, (q_d, q_s) in enumerate(_settings(cfg)):
        world_cfg = world_config_for(cfg.env, q_d, q_s)
        seeds = eval_world_seeds(cfg.seed, setting_idx, cfg.eval_episodes)
        for model in cfg.models:
            if model == "pure":
                stats = evaluate_policy_object(PureOptimizationPolicy(), world_cfg, seeds, cfg.reward)
                metrics.append(MetricsRow(model="pure", rho=cfg.reward.rho, q_d=q_d, q_s=q_s,
                                          answer_rate=stats["answer_rate"],
                                          mean_pickup_time_s=stats["mean_pickup_time_s"],
                                          mean_agent_reward_s=stats["mean_agent_reward_s"],
                                          epoch=-1, replication=0))
                continue
            for rep in range(cfg.replications):
                metrics.append(_train_and_eval(model, cfg, cfg.reward, world_cfg, setting_idx,
                                               q_d, q_s, rep, out_dir, curves, epochs, progress))
    _write_csv(out_dir / "metrics.csv", MetricsRow.HEADER, [m.row() for m in metrics])
    _write_csv(out_dir / "curves.csv", CURVE_HEADER, curves)
    return metrics


def sweep_rho(cfg: ExperimentConfig, out_dir, epochs=None, progress=None):
    """Actor-critic sensitivity sweep over the reward weight, plus the pure reference.

    Writes sweep.csv with one aggregated row per rho value and the pure
    optimization reference row, and per-replication rows to metrics.csv.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    q_d, q_s = _settings(cfg)[0]
    world_cfg = world_config_for(cfg.env, q_d, q_s)
    seeds = eval_world_seeds(cfg.seed, 0, cfg.eval_episodes)
    metrics: list[MetricsRow] = []
    curves: list = []
    sweep_rows = []
    for rho in cfg.rho_grid:
        reward = replace(cfg.reward, rho=float(rho))
        rows = [_train_and_eval("a2c", cfg, reward, world_cfg, 0, q_d, q_s, rep,
                                out_dir, curves, epochs, progress)
                for rep in range(cfg.replications)]
        metrics.extend(rows)
        sweep_rows.append(["a2c", repr(float(rho)),
                           repr(math.fsum(r.answer_rate for r in rows) / len(rows)),
                           repr(math.fsum(r.mean_pickup_time_s for r in rows) / len(rows)),
                           repr(math.fsum(r.mean_agent_reward_s for r in rows) / len(rows))])
    stats = evaluate_policy_object(PureOptimizationPolicy(), world_cfg, seeds, cfg.reward)
    metrics.append(MetricsRow(model="pure", rho=float("nan"), q_d=q_d, q_s=q_s,
                              answer_rate=stats["answer_rate"],
                              mean_pickup_time_s=stats["mean_pickup_time_s"],
                              mean_agent_reward_s=stats["mean_agent_reward_s"],
                              epoch=-1, replication=0))
    sweep_rows.append(["pure", "", repr(stats["answer_rate"]),
                       repr(stats["mean_pickup_time_s"]), repr(stats["mean_agent_reward_s"])])
    _write_csv(out_dir / "sweep.csv",
               ["model", "rho", "answer_rate", "mean_pickup_time_s", "mean_agent_reward_s"],
               sweep_rows)
    _write_csv(out_dir / "metrics.csv", MetricsRow.HEADER, [m.row() for m in metrics])
    _write_csv(out_dir / "curves.csv", CURVE_HEADER, curves)
    return metrics


def simulate_baseline(cfg: ExperimentConfig, out_dir, episodes: int | None = None):
    """Pure-optimization episodes only: metrics plus per-episode event logs."""
    out_dir = Path(out_dir)
    (out_dir / "episodes").mkdir(parents=True, exist_ok=True)
    n = episodes if episodes is not None else cfg.eval_episodes
    metrics = []
    for setting_idx, (q_d, q_s) in enumerate(_settings(cfg)):
        world_cfg = world_config_for(cfg.env, q_d, q_s)
        for k, seed in enumerate(eval_world_seeds(cfg.seed, setting_idx, n)):
            result = run_episode(make_world(world_cfg, seed), PureOptimizationPolicy(),
                                 collect_states=False)
            ledger = build_ledger(result.outcomes(), cfg.reward)
            _write_episode_log(result.events, out_dir / "episodes" / f"s{setting_idx}_ep{k:03d}.csv")
            metrics.append(MetricsRow(model="pure", rho=cfg.reward.rho, q_d=q_d, q_s=q_s,
                                      answer_rate=result.answer_rate(),
                                      mean_pickup_time_s=result.mean_pickup_s(),
                                      mean_agent_reward_s=episode_mean_reward(ledger),
                                      epoch=-1, replication=k))
    _write_csv(out_dir / "metrics.csv", MetricsRow.HEADER, [m.row() for m in metrics])
    return metrics
