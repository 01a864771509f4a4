"""Reward bookkeeping for matched/expired agents.

Each agent (one passenger request) earns exactly one nonzero reward, at its
terminal interval: the individual reward is match_benefit minus pickup cost on
a match (a configurable penalty, default 0, on expiry); the global reward is
the epoch-wide per-agent average of individual rewards, credited to every
agent at its own terminal interval; the final reward blends the two with a
weight rho.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

__all__ = [
    "RewardConfig",
    "AgentOutcome",
    "LedgerRow",
    "EpisodeRewardLedger",
    "individual_reward",
    "build_ledger",
    "blended_reward",
    "discounted_return",
]


@dataclass(frozen=True)
class RewardConfig:
    match_benefit: float = 800.0  # seconds credited for a successful match
    rho: float = 1.0              # weight on individual vs global reward
    gamma: float = 0.99           # discount per match interval
    expiry_penalty: float = 0.0   # terminal reward for never-matched agents

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.match_benefit <= 0:
            raise ValueError("match_benefit must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class AgentOutcome:
    """Terminal fate of one agent: when it ended, how, and at what pickup cost."""

    agent_id: int
    terminal_interval: int
    cause: str                  # 'matched' | 'expired'
    pickup_s: float | None = None

    def __post_init__(self):
        if self.cause not in ("matched", "expired"):
            raise ValueError(f"unknown terminal cause {self.cause!r}")
        if (self.cause == "matched") != (self.pickup_s is not None):
            raise ValueError("pickup_s must be present exactly for matched agents")


def individual_reward(outcome: AgentOutcome, t: int, cfg: RewardConfig) -> float:
    """Reward of one agent at interval t: zero before the terminal interval,
    match_benefit - pickup cost (or the expiry penalty) exactly at it."""
    if t > outcome.terminal_interval:
        raise ValueError(f"interval {t} is past the agent's terminal interval {outcome.terminal_interval}")
    if t < outcome.terminal_interval:
        return 0.0
    if outcome.cause == "matched":
        return cfg.match_benefit - outcome.pickup_s
    return cfg.expiry_penalty


def blended_reward(individual: float, global_avg: float, rho: float) -> float:
    """Convex combination rho * individual + (1 - rho) * global_avg."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return rho * individual + (1.0 - rho) * global_avg


@dataclass(frozen=True)
class LedgerRow:
    agent_id: int
    terminal_interval: int
    cause: str
    individual: float
    global_avg: float
    blended: float


@dataclass
class EpisodeRewardLedger:
    """Per-agent terminal rewards for one finished episode."""

    rows: list[LedgerRow]
    global_average: float
    n_agents: int

    @property
    def total_individual(self) -> float:
        return math.fsum(r.individual for r in self.rows)

    def blended_for(self, agent_id: int) -> float:
        for r in self.rows:
            if r.agent_id == agent_id:
                return r.blended
        raise KeyError(agent_id)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent_id", "terminal_interval", "cause", "individual", "global", "blended"])
            for r in self.rows:
                w.writerow([r.agent_id, r.terminal_interval, r.cause,
                            repr(r.individual), repr(r.global_avg), repr(r.blended)])


def build_ledger(outcomes: list[AgentOutcome], cfg: RewardConfig) -> EpisodeRewardLedger:
    """End-of-epoch backfill: compute the global average over all N agents that
    appeared, then assign each agent its blended reward at its own terminal
    interval (zero everywhere else by construction).

    Must only be called once the episode is finished (every agent terminal).
    """
    n = len(outcomes)
    individuals = [individual_reward(o, o.terminal_interval, cfg) for o in outcomes]
    global_avg = math.fsum(individuals) / n if n else 0.0
    rows = [
        LedgerRow(
            agent_id=o.agent_id,
            terminal_interval=o.terminal_interval,
            cause=o.cause,
            individual=ind,
            global_avg=global_avg,
            blended=blended_reward(ind, global_avg, cfg.rho),
        )
        for o, ind in zip(outcomes, individuals)
    ]
    return EpisodeRewardLedger(rows=rows, global_average=global_avg, n_agents=n)


def discounted_return(rewards, gamma: float) -> float:
    """Discounted sum gamma**k * r_k over a reward sequence (k from its start)."""
    return math.fsum(r * gamma ** k for k, r in enumerate(rewards))
