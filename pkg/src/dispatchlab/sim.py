"""Match-interval simulator for an online dispatch system.

Each interval: the joint binary actions split waiting requests into the
matching pool or a one-interval delay; the pool is optimally assigned to idle
drivers; matched requests terminate and matched drivers turn occupied; trips
complete; new arrivals and driver online/offline transitions are injected; and
waiting times advance. The agent count N_t changes interval to interval.

Two arrival regimes share the same world: a stochastic Gaussian/Poisson
generator (the compact benchmark environment, where matched drivers stay
occupied for the remainder of the short episode) and a deterministic schedule
ingested from request/shift tables (where trips complete and drivers come and
go). Everything is seeded and bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dispatchlab import features
from dispatchlab.geometry import (
    AreaConfig,
    GaussianArrivalSpec,
    Location,
    pickup_time_matrix,
    sample_count,
    sample_location,
    zone_cell_masses,
    zone_of,
)
from dispatchlab.matching import CostMatrix, solve_assignment
from dispatchlab.rewards import AgentOutcome

__all__ = [
    "Request",
    "Driver",
    "RequestSpawn",
    "DriverSpawn",
    "CustomArrivals",
    "ScheduledArrivals",
    "WorldConfig",
    "WorldState",
    "StepOutcome",
    "JointObservation",
    "AgentTrace",
    "EpisodeResult",
    "make_world",
    "step",
    "run_episode",
]

WAITING, MATCHED, EXPIRED = "waiting", "matched", "expired"
IDLE, OCCUPIED, OFFLINE = "idle", "occupied", "offline"


@dataclass
class Request:
    id: int
    origin: Location
    created_interval: int
    destination: Location | None = None
    trip_duration_s: float | None = None
    waited_intervals: int = 0
    status: str = WAITING
    matched_cost: float | None = None


@dataclass
class Driver:
    id: int
    location: Location
    status: str = IDLE
    busy_until: int | None = None
    destination: Location | None = None
    online_at: int = 0
    offline_at: int | None = None


@dataclass(frozen=True)
class RequestSpawn:
    origin: Location
    destination: Location | None = None
    trip_duration_s: float | None = None


@dataclass(frozen=True)
class DriverSpawn:
    location: Location
    offline_at: int | None = None


class CustomArrivals:
    """Stochastic arrival source: Poisson counts, independent Gaussian locations.

    Draw order per interval (the reproducibility contract): passenger count,
    then one location per passenger, then driver count, then one location per
    driver. Expected per-zone rates are the analytic clipped-Gaussian cell
    masses times the arrival rate, constant over time.
    """

    def __init__(self, area: AreaConfig, passenger_spec: GaussianArrivalSpec,
                 driver_spec: GaussianArrivalSpec, deterministic_counts: bool = False):
        self.area = area
        self.passenger_spec = passenger_spec
        self.driver_spec = driver_spec
        self.deterministic_counts = deterministic_counts
        self._p_rates = zone_cell_masses(passenger_spec, area) * passenger_spec.rate_per_interval
        self._d_rates = zone_cell_masses(driver_spec, area) * driver_spec.rate_per_interval

    def emit(self, t: int, rng: np.random.Generator):
        n_p = sample_count(self.passenger_spec, rng, self.deterministic_counts)
        requests = [RequestSpawn(sample_location(self.passenger_spec, self.area, rng))
                    for _ in range(n_p)]
        n_d = sample_count(self.driver_spec, rng, self.deterministic_counts)
        drivers = [DriverSpawn(sample_location(self.driver_spec, self.area, rng))
                   for _ in range(n_d)]
        return requests, drivers

    def expected_zone_rates(self, t: int):
        return self._p_rates, self._d_rates


class ScheduledArrivals:
    """Deterministic arrival source backed by ingested request/shift tables."""

    def __init__(self, area: AreaConfig, requests_by_interval: dict, drivers_by_interval: dict,
                 horizon: int, rate_bin_intervals: int = 60):
        self.area = area
        self._requests = requests_by_interval
        self._drivers = drivers_by_interval
        self._horizon = horizon
        self._bin = max(1, int(rate_bin_intervals))
        self._p_rate_bins, self._d_rate_bins = self._historical_rates()

    def _historical_rates(self):
        m = self.area.n_zones
        n_bins = max(1, -(-self._horizon // self._bin))
        p = np.zeros((n_bins, m))
        d = np.zeros((n_bins, m))
        for t, spawns in self._requests.items():
            if 0 <= t < self._horizon:
                for s in spawns:
                    p[t // self._bin, zone_of(s.origin, self.area)] += 1.0
        for t, spawns in self._drivers.items():
            if 0 <= t < self._horizon:
                for s in spawns:
                    d[t // self._bin, zone_of(s.location, self.area)] += 1.0
        widths = [min(self._bin, self._horizon - b * self._bin) or self._bin
                  for b in range(n_bins)]
        for b, w in enumerate(widths):
            p[b] /= w
            d[b] /= w
        return p, d

    def emit(self, t: int, rng: np.random.Generator):
        return list(self._requests.get(t, ())), list(self._drivers.get(t, ()))

    def expected_zone_rates(self, t: int):
        b = min(t // self._bin, self._p_rate_bins.shape[0] - 1)
        return self._p_rate_bins[b], self._d_rate_bins[b]


@dataclass
class WorldConfig:
    area: AreaConfig
    source: object
    horizon: int = 31                      # decision/matching rounds per episode
    arrival_intervals: int | None = None   # arrivals occur for t < this; None = horizon
    max_wait_intervals: int | None = None  # patience cap; None disables
    count_scale: float = 10.0              # feature normalization for zone counts

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.arrival_intervals is None:
            self.arrival_intervals = self.horizon
        if not 1 <= self.arrival_intervals <= self.horizon:
            raise ValueError("arrival_intervals must lie in [1, horizon]")
        if self.max_wait_intervals is not None and self.max_wait_intervals < 1:
            raise ValueError("max_wait_intervals must be >= 1 when set")


@dataclass
class WorldState:
    cfg: WorldConfig
    t: int
    waiting: list
    drivers: list
    rng: np.random.Generator
    episode_log: list = field(default_factory=list)
    _next_request_id: int = 0
    _next_driver_id: int = 0

    @property
    def horizon(self) -> int:
        return self.cfg.horizon

    def idle_drivers(self) -> list:
        return [d for d in self.drivers if d.status == IDLE]


@dataclass
class StepOutcome:
    matched: list          # (request_id, driver_id, pickup_s)
    new_requests: list     # Request objects appended for the next interval
    terminated: list       # (request_id, cause)


@dataclass
class JointObservation:
    """What a joint policy sees for one interval's waiting agents."""

    states: np.ndarray     # (N_t, 5M+2)
    t: int
    zones: np.ndarray      # (N_t,) origin zone per agent
    waited: np.ndarray     # (N_t,) intervals waited so far
    request_ids: list

    @property
    def n_agents(self) -> int:
        return len(self.request_ids)


def _inject_arrivals(world: WorldState, t: int) -> list:
    """Ask the arrival source for interval t's spawns and append them."""
    req_spawns, drv_spawns = world.cfg.source.emit(t, world.rng)
    new_requests = []
    for s in req_spawns:
        r = Request(id=world._next_request_id, origin=s.origin, created_interval=t,
                    destination=s.destination, trip_duration_s=s.trip_duration_s)
        world._next_request_id += 1
        world.waiting.append(r)
        new_requests.append(r)
        world.episode_log.append((t, "arrival", r.id, "", ""))
    for s in drv_spawns:
        d = Driver(id=world._next_driver_id, location=s.location, online_at=t,
                   offline_at=s.offline_at)
        world._next_driver_id += 1
        world.drivers.append(d)
        world.episode_log.append((t, "online", "", d.id, ""))
    return new_requests


def make_world(cfg: WorldConfig, seed) -> WorldState:
    """Fresh world at t = 0 with interval 0's arrivals already injected."""
    world = WorldState(cfg=cfg, t=0, waiting=[], drivers=[],
                       rng=np.random.default_rng(seed))
    _inject_arrivals(world, 0)
    return world


def _trip_ticks(pickup_s: float, trip_duration_s: float, interval_s: float) -> int:
    return max(1, math.ceil((pickup_s + trip_duration_s) / interval_s))


def step(world: WorldState, actions) -> StepOutcome:
    """Advance one match interval under the given per-waiting-request actions.

    Order: pool formation -> optimal assignment -> matched updates -> trip
    completions -> arrival injection for the next interval -> offline
    transitions -> patience expiry -> waiting-time increment -> t + 1.
    """
    actions = np.asarray(actions)
    if actions.shape[0] != len(world.waiting):
        raise ValueError(
            f"got {actions.shape[0]} actions for {len(world.waiting)} waiting requests")
    if world.t >= world.cfg.horizon:
        raise ValueError(f"step past horizon ({world.t} >= {world.cfg.horizon})")
    t = world.t
    area = world.cfg.area

    pool = [r for r, a in zip(world.waiting, actions) if a == 1]
    idle = world.idle_drivers()
    matched = []
    terminated = []
    if pool and idle:
        costs = pickup_time_matrix(
            [r.origin for r in pool], [d.location for d in idle], area)
        plan = solve_assignment(CostMatrix(costs))
        for pi, dj in plan.pairs:
            req, drv = pool[pi], idle[dj]
            cost = float(costs[pi, dj])
            req.status = MATCHED
            req.matched_cost = cost
            drv.status = OCCUPIED
            if req.trip_duration_s is not None:
                drv.busy_until = t + _trip_ticks(cost, req.trip_duration_s, area.interval_seconds)
                drv.destination = req.destination
            else:
                drv.busy_until = world.cfg.horizon + 1  # stays occupied for the episode
            matched.append((req.id, drv.id, cost))
            terminated.append((req.id, MATCHED))
            world.episode_log.append((t, "match", req.id, drv.id, repr(cost)))
    world.waiting = [r for r in world.waiting if r.status == WAITING]

    for d in world.drivers:
        if d.status == OCCUPIED and d.busy_until is not None and d.busy_until <= t:
            d.busy_until = None
            if d.destination is not None:
                d.location = d.destination
                d.destination = None
            d.status = OFFLINE if (d.offline_at is not None and d.offline_at <= t) else IDLE

    new_requests = []
    if t + 1 < world.cfg.arrival_intervals:
        new_requests = _inject_arrivals(world, t + 1)

    for d in world.drivers:
        if d.status == IDLE and d.offline_at is not None and d.offline_at <= t + 1:
            d.status = OFFLINE
            world.episode_log.append((t + 1, "offline", "", d.id, ""))

    cap = world.cfg.max_wait_intervals
    survivors = []
    for r in world.waiting:
        if r.created_interval <= t:
            r.waited_intervals += 1
        if cap is not None and r.status == WAITING and r.waited_intervals >= cap:
            r.status = EXPIRED
            terminated.append((r.id, EXPIRED))
            world.episode_log.append((t + 1, "expire", r.id, "", ""))
        else:
            survivors.append(r)
    world.waiting = survivors

    world.t = t + 1
    return StepOutcome(matched=matched, new_requests=new_requests, terminated=terminated)


@dataclass
class AgentTrace:
    """One agent's full life: states seen, actions taken, terminal fate."""

    request_id: int
    born: int
    zone: int
    terminal_interval: int = -1
    cause: str = ""
    pickup_s: float | None = None
    actions: list = field(default_factory=list)
    states: np.ndarray | None = None


@dataclass
class EpisodeResult:
    horizon: int
    n_zones: int
    agents: list
    events: list
    interval_counts: list

    @property
    def n_created(self) -> int:
        return len(self.agents)

    @property
    def n_matched(self) -> int:
        return sum(1 for a in self.agents if a.cause == MATCHED)

    @property
    def n_expired(self) -> int:
        return sum(1 for a in self.agents if a.cause == EXPIRED)

    @property
    def matched_pickups(self) -> list:
        return [a.pickup_s for a in self.agents if a.cause == MATCHED]

    def answer_rate(self) -> float:
        return self.n_matched / self.n_created if self.n_created else 0.0

    def mean_pickup_s(self) -> float:
        picks = self.matched_pickups
        return math.fsum(picks) / len(picks) if picks else float("nan")

    def outcomes(self) -> list:
        return [AgentOutcome(agent_id=a.request_id, terminal_interval=a.terminal_interval,
                             cause=a.cause, pickup_s=a.pickup_s)
                for a in self.agents]


def run_episode(world: WorldState, policy, collect_states: bool = True) -> EpisodeResult:
    """Roll a fresh world through its whole horizon under a joint policy.

    Queries the policy once per interval for the current waiting set, applies
    step(), and at the horizon terminates all still-waiting requests as
    expired. Returns every agent's trace (for learning) plus the event log.
    """
    if world.t != 0:
        raise ValueError("run_episode requires a fresh world at t = 0")
    traces: dict[int, AgentTrace] = {}
    state_rows: dict[int, list] = {}
    for r in world.waiting:
        traces[r.id] = AgentTrace(request_id=r.id, born=r.created_interval,
                                  zone=zone_of(r.origin, world.cfg.area))
        state_rows[r.id] = []
    interval_counts = []

    for t in range(world.cfg.horizon):
        obs = features.assemble_joint_state(world)
        interval_counts.append(obs.n_agents)
        actions = np.asarray(policy.act(obs), dtype=int)
        if actions.shape[0] != obs.n_agents:
            raise ValueError("policy returned a wrong-sized action vector")
        for k, rid in enumerate(obs.request_ids):
            traces[rid].actions.append(int(actions[k]))
            if collect_states:
                state_rows[rid].append(obs.states[k])
        outcome = step(world, actions)
        for rid, cause in outcome.terminated:
            traces[rid].terminal_interval = t
            traces[rid].cause = cause
        for rid, did, cost in outcome.matched:
            traces[rid].pickup_s = cost
        for r in outcome.new_requests:
            traces[r.id] = AgentTrace(request_id=r.id, born=r.created_interval,
                                      zone=zone_of(r.origin, world.cfg.area))
            state_rows[r.id] = []

    for r in world.waiting:  # horizon reached: everyone left expires
        r.status = EXPIRED
        traces[r.id].terminal_interval = world.cfg.horizon - 1
        traces[r.id].cause = EXPIRED
        world.episode_log.append((world.t, "expire", r.id, "", ""))
    world.waiting = []

    agents = [traces[rid] for rid in sorted(traces)]
    if collect_states:
        for a in agents:
            a.states = np.array(state_rows[a.request_id])
    return EpisodeResult(horizon=world.cfg.horizon, n_zones=world.cfg.area.n_zones,
                         agents=agents, events=list(world.episode_log),
                         interval_counts=interval_counts)
