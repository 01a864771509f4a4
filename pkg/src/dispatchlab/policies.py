"""Centralized decision policies for the delayed-matching game.

One parameter set is shared by every agent alive in an interval, whatever the
agent count: a deep Q-network with replay memory and a periodically synced
target copy; an actor-critic pair (softmax policy head, linear value head with
a target copy); a tabular Q baseline over (interval, zone); and the
no-learning pure-optimization baseline that sends every agent into the pool
immediately. Action 1 means "enter the matching pool now", action 0 means
"delay one interval"; ties prefer entering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dispatchlab import nets
from dispatchlab.rewards import RewardConfig, build_ledger
from dispatchlab.sim import EpisodeResult, run_episode

__all__ = [
    "Transition",
    "ReplayMemory",
    "EpsilonSchedule",
    "TrainingConfig",
    "EpochStats",
    "build_transitions",
    "greedy_actions",
    "dqn_act",
    "dqn_target",
    "a2c_value_target",
    "a2c_advantage",
    "PureOptimizationPolicy",
    "pure_optimization_policy",
    "NetworkGreedyPolicy",
    "DqnLearner",
    "A2cLearner",
    "TabularQLearner",
    "tabular_q_act",
    "tabular_q_update",
]

ENTER, DELAY = 1, 0


@dataclass(frozen=True)
class Transition:
    """One agent-interval experience record (s, a, r, s', done)."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: int


class ReplayMemory:
    """Bounded FIFO of transitions with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buf: list = []
        self._write = 0

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, tr: Transition) -> None:
        if len(self._buf) < self.capacity:
            self._buf.append(tr)
        else:
            self._buf[self._write] = tr  # overwrite the oldest entry
            self._write = (self._write + 1) % self.capacity

    def extend(self, transitions) -> None:
        for tr in transitions:
            self.push(tr)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Stacked (S, A, R, S', D) arrays for a uniform batch without replacement."""
        if batch_size > len(self._buf):
            raise ValueError("not enough transitions to sample")
        idx = rng.choice(len(self._buf), size=batch_size, replace=False)
        batch = [self._buf[i] for i in idx]
        s = np.stack([tr.s for tr in batch])
        a = np.array([tr.a for tr in batch], dtype=int)
        r = np.array([tr.r for tr in batch])
        s2 = np.stack([tr.s_next for tr in batch])
        d = np.array([tr.done for tr in batch], dtype=float)
        return s, a, r, s2, d


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over decay_epochs, then flat."""

    start: float = 1.0
    end: float = 0.05
    decay_epochs: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ValueError("need start >= end, both in [0, 1]")

    def value(self, epoch: int) -> float:
        if self.decay_epochs <= 0:
            return self.end
        frac = min(max(epoch, 0) / self.decay_epochs, 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class TrainingConfig:
    """Epoch/update budget, learning rates, and exploration knobs."""

    epochs: int = 2000
    dqn_updates_per_epoch: int = 50
    a2c_updates_per_epoch: int = 50
    batch_size: int = 256
    target_sync_updates: int = 100
    replay_capacity: int = 100_000
    q_learning_rate: float = 1e-4
    actor_learning_rate: float = 1e-4
    critic_learning_rate: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_epochs: int | None = None  # defaults to epochs // 2
    normalize_advantage: bool = True
    reward_scale: float | None = None        # defaults to 1 / match_benefit
    hidden: tuple[int, ...] = (512, 256, 128)
    tabular_alpha: float = 0.1
    grad_clip_norm: float = 10.0

    def __post_init__(self):
        for name in ("epochs", "dqn_updates_per_epoch", "a2c_updates_per_epoch",
                     "batch_size", "target_sync_updates", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def epsilon_schedule(self) -> EpsilonSchedule:
        decay = self.epsilon_decay_epochs
        if decay is None:
            decay = max(1, self.epochs // 2)
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, decay)

    def scale_for(self, reward_cfg: RewardConfig) -> float:
        return self.reward_scale if self.reward_scale is not None else 1.0 / reward_cfg.match_benefit


@dataclass
class EpochStats:
    epoch: int
    answer_rate: float
    mean_pickup_s: float
    mean_reward_s: float
    epsilon: float
    loss: float
    n_agents: int


def build_transitions(result: EpisodeResult, ledger, reward_scale: float = 1.0):
    """Expand an episode into per-agent-interval transitions.

    Rewards are the blended terminal rewards from the ledger at each agent's
    terminal interval and zero elsewhere; terminal transitions carry a zero
    placeholder next state that targets must ignore.
    """
    transitions = []
    for agent in result.agents:
        if agent.states is None:
            raise ValueError("episode was rolled without collect_states")
        span = agent.terminal_interval - agent.born + 1
        terminal_reward = ledger.blended_for(agent.request_id) * reward_scale
        zero = np.zeros(agent.states.shape[1])
        for k in range(span):
            done = 1 if k == span - 1 else 0
            transitions.append(Transition(
                s=agent.states[k],
                a=agent.actions[k],
                r=terminal_reward if done else 0.0,
                s_next=zero if done else agent.states[k + 1],
                done=done,
            ))
    return transitions


def episode_mean_reward(ledger) -> float:
    """Reported metric: mean terminal blended reward over all agents."""
    if not ledger.rows:
        return float("nan")
    return math.fsum(r.blended for r in ledger.rows) / len(ledger.rows)


# ---------------------------------------------------------------------------
# action selection
# ---------------------------------------------------------------------------

def greedy_actions(values: np.ndarray) -> np.ndarray:
    """Argmax over the two action values; exact ties enter the pool (action 1)."""
    values = np.atleast_2d(values)
    return np.where(values[:, ENTER] >= values[:, DELAY], ENTER, DELAY).astype(int)


def dqn_act(params, spec, states, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Per-agent independent epsilon-greedy actions from the shared Q-network."""
    n = states.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    actions = greedy_actions(nets.forward(params, spec, states))
    explore = rng.random(n) < epsilon
    if explore.any():
        actions = actions.copy()
        actions[explore] = rng.integers(0, 2, size=int(explore.sum()))
    return actions


def dqn_target(r, s_next, done, target_params, target_spec, gamma: float) -> np.ndarray:
    """Target values: r for terminal transitions, else r + gamma * max_a' Q_target(s', a')."""
    r = np.asarray(r, dtype=float)
    done = np.asarray(done, dtype=float)
    q_next = nets.forward(target_params, target_spec, s_next)
    return r + (1.0 - done) * gamma * q_next.max(axis=1)


def a2c_value_target(r, s_next, done, critic_target_params, critic_spec, gamma: float) -> np.ndarray:
    """Critic targets: the action expectation collapses to r + gamma * V'(s')
    because the bracket does not depend on the action (and to r when done)."""
    r = np.asarray(r, dtype=float)
    done = np.asarray(done, dtype=float)
    v_next = nets.forward(critic_target_params, critic_spec, s_next)[:, 0]
    return r + (1.0 - done) * gamma * v_next


def a2c_advantage(r, s, s_next, done, critic_params, critic_target_params, critic_spec,
                  gamma: float) -> np.ndarray:
    """TD-error advantage: target minus the current value estimate of s."""
    y = a2c_value_target(r, s_next, done, critic_target_params, critic_spec, gamma)
    v = nets.forward(critic_params, critic_spec, s)[:, 0]
    return y - v


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class PureOptimizationPolicy:
    """Every waiting agent enters the pool every interval; no learning."""

    def act(self, obs) -> np.ndarray:
        return np.ones(obs.n_agents, dtype=int)


def pure_optimization_policy(states) -> np.ndarray:
    return np.ones(np.atleast_2d(states).shape[0] if np.size(states) else 0, dtype=int)


class NetworkGreedyPolicy:
    """Deterministic argmax policy over a value or action-probability network."""

    def __init__(self, params, spec):
        self.params = params
        self.spec = spec

    def act(self, obs) -> np.ndarray:
        if obs.n_agents == 0:
            return np.zeros(0, dtype=int)
        return greedy_actions(nets.forward(self.params, self.spec, obs.states))


class _EpsilonGreedyQPolicy:
    def __init__(self, params, spec, epsilon, rng):
        self.params = params
        self.spec = spec
        self.epsilon = epsilon
        self.rng = rng

    def act(self, obs) -> np.ndarray:
        return dqn_act(self.params, self.spec, obs.states, self.epsilon, self.rng)


class _SoftmaxSamplingPolicy:
    def __init__(self, params, spec, rng):
        self.params = params
        self.spec = spec
        self.rng = rng

    def act(self, obs) -> np.ndarray:
        if obs.n_agents == 0:
            return np.zeros(0, dtype=int)
        probs = nets.forward(self.params, self.spec, obs.states)
        return (self.rng.random(obs.n_agents) < probs[:, ENTER]).astype(int)


class _TabularEpsilonGreedyPolicy:
    def __init__(self, table, epsilon, rng):
        self.table = table
        self.epsilon = epsilon
        self.rng = rng

    def act(self, obs) -> np.ndarray:
        return tabular_q_act(self.table, obs.t, obs.zones, self.epsilon, self.rng)


# ---------------------------------------------------------------------------
# learners
# ---------------------------------------------------------------------------

class DqnLearner:
    """Shared-weights deep Q-learning over all agents' transitions."""

    def __init__(self, state_dim: int, train_cfg: TrainingConfig, reward_cfg: RewardConfig,
                 seed=0):
        self.cfg = train_cfg
        self.reward_cfg = reward_cfg
        self.spec = nets.MlpSpec(input_dim=state_dim, output_dim=2,
                                 hidden=train_cfg.hidden, output_head="linear")
        ss = np.random.SeedSequence(seed).spawn(3)
        self.params = nets.init_params(self.spec, np.random.default_rng(ss[0]))
        self.target_params = nets.clone_params(self.params)
        self.action_rng = np.random.default_rng(ss[1])
        self.replay_rng = np.random.default_rng(ss[2])
        self.replay = ReplayMemory(train_cfg.replay_capacity)
        self.opt = nets.OptimizerState(learning_rate=train_cfg.q_learning_rate,
                                       clip_norm=train_cfg.grad_clip_norm)
        self.schedule = train_cfg.epsilon_schedule()
        self.updates_done = 0
        self.reward_scale = train_cfg.scale_for(reward_cfg)

    def policy(self, epsilon: float):
        return _EpsilonGreedyQPolicy(self.params, self.spec, epsilon, self.action_rng)

    def greedy_policy(self):
        return NetworkGreedyPolicy(nets.clone_params(self.params), self.spec)

    def train_epoch(self, world_factory, epoch: int) -> EpochStats:
        """One episode of experience plus a round of minibatch updates."""
        epsilon = self.schedule.value(epoch)
        world = world_factory(epoch)
        result = run_episode(world, self.policy(epsilon))
        ledger = build_ledger(result.outcomes(), self.reward_cfg)
        self.replay.extend(build_transitions(result, ledger, self.reward_scale))

        losses = []
        gamma = self.reward_cfg.gamma
        for _ in range(self.cfg.dqn_updates_per_epoch):
            if len(self.replay) < self.cfg.batch_size:
                break  # warm-up: skip updates until the memory can fill a batch
            s, a, r, s2, d = self.replay.sample(self.cfg.batch_size, self.replay_rng)
            y = dqn_target(r, s2, d, self.target_params, self.spec, gamma)
            q, cache = nets.forward(self.params, self.spec, s, want_cache=True)
            q_taken = q[np.arange(len(a)), a]
            losses.append(float(np.mean((q_taken - y) ** 2)))
            grad_out = np.zeros_like(q)
            grad_out[np.arange(len(a)), a] = 2.0 * (q_taken - y) / len(a)
            w_g, b_g = nets.backward(self.params, self.spec, cache, grad_out)
            nets.apply_update(self.params, w_g, b_g, self.opt)
            self.updates_done += 1
            if self.updates_done % self.cfg.target_sync_updates == 0:
                self.target_params = nets.clone_params(self.params)

        return EpochStats(epoch=epoch, answer_rate=result.answer_rate(),
                          mean_pickup_s=result.mean_pickup_s(),
                          mean_reward_s=episode_mean_reward(ledger), epsilon=epsilon,
                          loss=math.fsum(losses) / len(losses) if losses else float("nan"),
                          n_agents=result.n_created)

    def checkpoint(self, path) -> None:
        nets.save_checkpoint(path, self.spec, self.params)


class A2cLearner:
    """Centralized actor-critic: softmax policy, linear value with target copy."""

    def __init__(self, state_dim: int, train_cfg: TrainingConfig, reward_cfg: RewardConfig,
                 seed=0):
        self.cfg = train_cfg
        self.reward_cfg = reward_cfg
        self.actor_spec = nets.MlpSpec(input_dim=state_dim, output_dim=2,
                                       hidden=train_cfg.hidden, output_head="softmax")
        self.critic_spec = nets.MlpSpec(input_dim=state_dim, output_dim=1,
                                        hidden=train_cfg.hidden, output_head="linear")
        ss = np.random.SeedSequence(seed).spawn(4)
        self.actor = nets.init_params(self.actor_spec, np.random.default_rng(ss[0]))
        self.critic = nets.init_params(self.critic_spec, np.random.default_rng(ss[1]))
        self.critic_target = nets.clone_params(self.critic)
        self.action_rng = np.random.default_rng(ss[2])
        self.replay_rng = np.random.default_rng(ss[3])
        self.replay = ReplayMemory(train_cfg.replay_capacity)
        self.actor_opt = nets.OptimizerState(learning_rate=train_cfg.actor_learning_rate,
                                             clip_norm=train_cfg.grad_clip_norm)
        self.critic_opt = nets.OptimizerState(learning_rate=train_cfg.critic_learning_rate,
                                              clip_norm=train_cfg.grad_clip_norm)
        self.updates_done = 0
        self.reward_scale = train_cfg.scale_for(reward_cfg)

    def policy(self):
        return _SoftmaxSamplingPolicy(self.actor, self.actor_spec, self.action_rng)

    def greedy_policy(self):
        return NetworkGreedyPolicy(nets.clone_params(self.actor), self.actor_spec)

    def train_epoch(self, world_factory, epoch: int) -> EpochStats:
        world = world_factory(epoch)
        result = run_episode(world, self.policy())
        ledger = build_ledger(result.outcomes(), self.reward_cfg)
        self.replay.extend(build_transitions(result, ledger, self.reward_scale))

        losses = []
        gamma = self.reward_cfg.gamma
        for _ in range(self.cfg.a2c_updates_per_epoch):
            if len(self.replay) < self.cfg.batch_size:
                break
            s, a, r, s2, d = self.replay.sample(self.cfg.batch_size, self.replay_rng)
            y = a2c_value_target(r, s2, d, self.critic_target, self.critic_spec, gamma)

            v, v_cache = nets.forward(self.critic, self.critic_spec, s, want_cache=True)
            v = v[:, 0]
            advantage = y - v  # TD error, treated as a constant in the actor step
            losses.append(float(np.mean((v - y) ** 2)))
            grad_v = (2.0 * (v - y) / len(a))[:, None]
            w_g, b_g = nets.backward(self.critic, self.critic_spec, v_cache, grad_v)
            nets.apply_update(self.critic, w_g, b_g, self.critic_opt)

            if self.cfg.normalize_advantage:
                advantage = (advantage - advantage.mean()) / (advantage.std() + 1e-8)
            probs, p_cache = nets.forward(self.actor, self.actor_spec, s, want_cache=True)
            taken = probs[np.arange(len(a)), a]
            # ascend E[log pi(a|s) * A]: minimize its negation
            grad_p = np.zeros_like(probs)
            grad_p[np.arange(len(a)), a] = -advantage / (np.maximum(taken, 1e-12) * len(a))
            w_g, b_g = nets.backward(self.actor, self.actor_spec, p_cache, grad_p)
            nets.apply_update(self.actor, w_g, b_g, self.actor_opt)

            self.updates_done += 1
            if self.updates_done % self.cfg.target_sync_updates == 0:
                self.critic_target = nets.clone_params(self.critic)

        return EpochStats(epoch=epoch, answer_rate=result.answer_rate(),
                          mean_pickup_s=result.mean_pickup_s(),
                          mean_reward_s=episode_mean_reward(ledger), epsilon=float("nan"),
                          loss=math.fsum(losses) / len(losses) if losses else float("nan"),
                          n_agents=result.n_created)

    def checkpoint(self, path) -> None:
        nets.save_checkpoint(path, self.actor_spec, self.actor)


# ---------------------------------------------------------------------------
# tabular Q baseline
# ---------------------------------------------------------------------------

def tabular_q_act(table: np.ndarray, t: int, zones, epsilon: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy over the (interval, zone) Q-table; ties enter the pool."""
    zones = np.asarray(zones, dtype=int)
    if zones.size == 0:
        return np.zeros(0, dtype=int)
    if not (0 <= t < table.shape[0]):
        raise IndexError(f"interval {t} outside table horizon {table.shape[0]}")
    if zones.size and (zones.min() < 0 or zones.max() >= table.shape[1]):
        raise IndexError("zone index outside table")
    q = table[t, zones]
    actions = np.where(q[:, ENTER] >= q[:, DELAY], ENTER, DELAY).astype(int)
    explore = rng.random(zones.size) < epsilon
    if explore.any():
        actions[explore] = rng.integers(0, 2, size=int(explore.sum()))
    return actions


def tabular_q_update(table: np.ndarray, t: int, zone: int, action: int, reward: float,
                     t_next: int, zone_next: int, done: int, alpha: float,
                     gamma: float) -> None:
    """One-step Q-learning update in place."""
    if not (0 <= t < table.shape[0]) or not (0 <= zone < table.shape[1]):
        raise IndexError(f"(t={t}, zone={zone}) outside table {table.shape[:2]}")
    if done:
        y = reward
    else:
        if not (0 <= t_next < table.shape[0]):
            raise IndexError(f"next interval {t_next} outside table horizon {table.shape[0]}")
        y = reward + gamma * float(table[t_next, zone_next].max())
    table[t, zone, action] += alpha * (y - table[t, zone, action])


class TabularQLearner:
    """Q-table over (interval, zone, action); state is location and time only."""

    def __init__(self, horizon: int, n_zones: int, train_cfg: TrainingConfig,
                 reward_cfg: RewardConfig, seed=0):
        self.cfg = train_cfg
        self.reward_cfg = reward_cfg
        self.table = np.zeros((horizon, n_zones, 2))
        self.action_rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.schedule = train_cfg.epsilon_schedule()

    def policy(self, epsilon: float):
        return _TabularEpsilonGreedyPolicy(self.table, epsilon, self.action_rng)

    def greedy_policy(self):
        return _TabularEpsilonGreedyPolicy(self.table.copy(), 0.0, self.action_rng)

    def train_epoch(self, world_factory, epoch: int) -> EpochStats:
        epsilon = self.schedule.value(epoch)
        world = world_factory(epoch)
        result = run_episode(world, self.policy(epsilon), collect_states=False)
        ledger = build_ledger(result.outcomes(), self.reward_cfg)
        for agent in result.agents:
            terminal_reward = ledger.blended_for(agent.request_id)
            span = agent.terminal_interval - agent.born + 1
            for k in range(span):
                t = agent.born + k
                done = 1 if k == span - 1 else 0
                tabular_q_update(self.table, t, agent.zone, agent.actions[k],
                                 terminal_reward if done else 0.0,
                                 t + 1, agent.zone, done,
                                 self.cfg.tabular_alpha, self.reward_cfg.gamma)
        return EpochStats(epoch=epoch, answer_rate=result.answer_rate(),
                          mean_pickup_s=result.mean_pickup_s(),
                          mean_reward_s=episode_mean_reward(ledger), epsilon=epsilon,
                          loss=float("nan"), n_agents=result.n_created)

    def dump_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "zone", "q_delay", "q_enter"])
            for t in range(self.table.shape[0]):
                for z in range(self.table.shape[1]):
                    w.writerow([t, z, repr(self.table[t, z, DELAY]),
                                repr(self.table[t, z, ENTER])])

    @classmethod
    def load_csv(cls, path, horizon: int, n_zones: int):
        import csv
        table = np.zeros((horizon, n_zones, 2))
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                t, z = int(row["t"]), int(row["zone"])
                table[t, z, DELAY] = float(row["q_delay"])
                table[t, z, ENTER] = float(row["q_enter"])
        return table
