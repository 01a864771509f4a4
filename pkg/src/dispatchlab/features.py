"""Per-agent state vectors: shared grid view plus local view.

Every waiting agent observes the same global grid features (leftover waiting
and idle counts per zone, expected passenger and driver arrival rates per
zone) concatenated with its own local features (origin-zone one-hot,
normalized cumulative waiting time, and the expected pickup time obtained by
solving the assignment over all waiting agents and idle drivers virtually,
without committing any matches). With M zones each vector has length 5M + 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from dispatchlab.geometry import max_pickup_time, pickup_time_matrix, zone_of
from dispatchlab.matching import CostMatrix, MatchPlan, solve_assignment

__all__ = [
    "GlobalState",
    "LocalState",
    "state_dim",
    "virtual_match",
    "build_global_state",
    "build_local_state",
    "assemble_joint_state",
    "dump_features_csv",
]


@dataclass(frozen=True)
class GlobalState:
    """Raw per-zone vectors shared by every agent within one interval."""

    waiting_counts: np.ndarray
    idle_counts: np.ndarray
    passenger_rates: np.ndarray
    driver_rates: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate(
            [self.waiting_counts, self.idle_counts, self.passenger_rates, self.driver_rates])


@dataclass(frozen=True)
class LocalState:
    """One agent's private features: zone one-hot, wait, expected pickup."""

    zone_one_hot: np.ndarray
    cumulative_wait: float   # normalized by the episode duration
    expected_pickup: float   # normalized by the area's max pickup time

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.zone_one_hot, [self.cumulative_wait, self.expected_pickup]])


def state_dim(n_zones: int) -> int:
    return 5 * n_zones + 2


def virtual_match(world) -> dict:
    """Expected pickup seconds per waiting request id, from a virtual assignment.

    Solves the same optimization as real matching but over ALL waiting agents
    (regardless of their upcoming action) and all idle drivers, purely to
    produce the expected-pickup feature. Never mutates the world; agents left
    unmatched map to None.
    """
    waiting = world.waiting
    idle = world.idle_drivers()
    if not waiting or not idle:
        return {r.id: None for r in waiting}
    costs = pickup_time_matrix([r.origin for r in waiting], [d.location for d in idle],
                               world.cfg.area)
    plan = solve_assignment(CostMatrix(costs))
    expected = {r.id: None for r in waiting}
    for i, j in plan.pairs:
        expected[waiting[i].id] = float(costs[i, j])
    return expected


def build_global_state(world) -> GlobalState:
    """Count leftover waiting/idle agents per zone and attach expected rates."""
    area = world.cfg.area
    m = area.n_zones
    waiting_zones = [zone_of(r.origin, area) for r in world.waiting]
    idle_zones = [zone_of(d.location, area) for d in world.idle_drivers()]
    waiting_counts = np.bincount(waiting_zones, minlength=m).astype(float)
    idle_counts = np.bincount(idle_zones, minlength=m).astype(float)
    p_rates, d_rates = world.cfg.source.expected_zone_rates(world.t)
    return GlobalState(waiting_counts=waiting_counts, idle_counts=idle_counts,
                       passenger_rates=np.asarray(p_rates, dtype=float),
                       driver_rates=np.asarray(d_rates, dtype=float))


def build_local_state(agent, expected_pickup_s, world) -> LocalState:
    """Local view for one waiting agent given its virtual-match pickup cost.

    An agent the virtual plan could not serve carries the sentinel cost (the
    area's maximum pickup time), i.e. a normalized expected pickup of 1.0.
    """
    area = world.cfg.area
    if all(r.id != agent.id for r in world.waiting):
        raise ValueError(f"request {agent.id} is not in the waiting list")
    one_hot = np.zeros(area.n_zones)
    one_hot[zone_of(agent.origin, area)] = 1.0
    c_max = max_pickup_time(area)
    pickup = c_max if expected_pickup_s is None else float(expected_pickup_s)
    episode_s = world.cfg.horizon * area.interval_seconds
    return LocalState(
        zone_one_hot=one_hot,
        cumulative_wait=min(agent.waited_intervals * area.interval_seconds / episode_s, 1.0),
        expected_pickup=min(pickup / c_max, 1.0),
    )


def assemble_joint_state(world):
    """All waiting agents' state vectors for the current interval.

    Returns a JointObservation whose states matrix has one row per waiting
    agent (N_t rows, 5M+2 columns): the normalized shared global block
    followed by each agent's local block. Zone counts and rates are scaled by
    the configured count scale and clipped to [0, 1].
    """
    from dispatchlab.sim import JointObservation  # deferred to avoid an import cycle

    area = world.cfg.area
    m = area.n_zones
    dim = state_dim(m)
    n = len(world.waiting)
    scale = world.cfg.count_scale
    if n == 0:
        return JointObservation(states=np.zeros((0, dim)), t=world.t,
                                zones=np.zeros(0, dtype=int), waited=np.zeros(0, dtype=int),
                                request_ids=[])
    global_state = build_global_state(world)
    global_block = np.clip(global_state.stacked() / scale, 0.0, 1.0)
    expected = virtual_match(world)

    states = np.empty((n, dim))
    zones = np.empty(n, dtype=int)
    waited = np.empty(n, dtype=int)
    ids = []
    for k, r in enumerate(world.waiting):
        local = build_local_state(r, expected[r.id], world)
        states[k, :4 * m] = global_block
        states[k, 4 * m:] = local.stacked()
        zones[k] = int(np.argmax(local.zone_one_hot))
        waited[k] = r.waited_intervals
        ids.append(r.id)
    assert states.shape[1] == dim, f"state width {states.shape[1]} != {dim}"
    return JointObservation(states=states, t=world.t, zones=zones, waited=waited,
                            request_ids=ids)


def dump_features_csv(result, path) -> None:
    """One row per agent per interval: request id, interval, then the state vector."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if result.agents and result.agents[0].states is not None:
            width = result.agents[0].states.shape[1]
        else:
            width = state_dim(result.n_zones)
        w.writerow(["request_id", "t"] + [f"f{k}" for k in range(width)])
        for a in result.agents:
            if a.states is None:
                continue
            for k in range(a.states.shape[0]):
                w.writerow([a.request_id, a.born + k] + [repr(x) for x in a.states[k]])
