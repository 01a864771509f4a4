"""Planar service area: grid partition, travel times, arrival sampling.

The service area is a W x H km rectangle cut into a uniform grid of zones
(row-major indexing). Travel times between points are Manhattan distance at a
constant vehicle speed, expressed in seconds. Arrival locations are drawn from
axis-independent Gaussians and clipped to the area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AreaConfig",
    "Location",
    "GaussianArrivalSpec",
    "pickup_time",
    "pickup_time_matrix",
    "max_pickup_time",
    "zone_of",
    "zone_cell_masses",
    "sample_location",
    "sample_count",
]


@dataclass(frozen=True)
class AreaConfig:
    """Service-area geometry and timing constants."""

    width_km: float = 4.0
    height_km: float = 4.0
    grid_rows: int = 10
    grid_cols: int = 10
    speed_kmh: float = 25.0
    interval_seconds: float = 1.0

    def __post_init__(self):
        if self.width_km <= 0 or self.height_km <= 0:
            raise ValueError("area dimensions must be strictly positive")
        if self.speed_kmh <= 0:
            raise ValueError("speed_kmh must be strictly positive")
        if self.interval_seconds <= 0:
            raise ValueError("interval_seconds must be strictly positive")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must have at least one cell")

    @property
    def n_zones(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def cell_width_km(self) -> float:
        return self.width_km / self.grid_cols

    @property
    def cell_height_km(self) -> float:
        return self.height_km / self.grid_rows

    def clip(self, x_km: float, y_km: float) -> "Location":
        return Location(
            min(max(x_km, 0.0), self.width_km),
            min(max(y_km, 0.0), self.height_km),
        )


@dataclass(frozen=True)
class Location:
    """A point inside the service area, in km from the south-west corner."""

    x_km: float
    y_km: float


@dataclass(frozen=True)
class GaussianArrivalSpec:
    """Arrival process for one population (waiting passengers or idle drivers).

    Locations are bivariate Gaussian with independent axes; counts per match
    interval are Poisson with mean ``rate_per_interval`` (or a fixed
    ``round(rate)`` in deterministic mode, used by tests).
    """

    mean: Location
    std: tuple[float, float]
    rate_per_interval: float

    def __post_init__(self):
        if self.std[0] <= 0 or self.std[1] <= 0:
            raise ValueError("std components must be strictly positive")
        if self.rate_per_interval < 0:
            raise ValueError("rate_per_interval must be >= 0")


def pickup_time(a: Location, b: Location, cfg: AreaConfig) -> float:
    """Travel time in seconds between two points: Manhattan distance at constant speed."""
    d_km = abs(a.x_km - b.x_km) + abs(a.y_km - b.y_km)
    return d_km / cfg.speed_kmh * 3600.0


def max_pickup_time(cfg: AreaConfig) -> float:
    """Largest possible pickup time in the area (opposite corners)."""
    return (cfg.width_km + cfg.height_km) / cfg.speed_kmh * 3600.0


def pickup_time_matrix(origins, positions, cfg: AreaConfig) -> np.ndarray:
    """Pairwise pickup times in seconds, shape (len(origins), len(positions)).

    Bit-identical to pickup_time applied elementwise.
    """
    ax = np.array([p.x_km for p in origins])
    ay = np.array([p.y_km for p in origins])
    bx = np.array([p.x_km for p in positions])
    by = np.array([p.y_km for p in positions])
    d_km = np.abs(ax[:, None] - bx[None, :]) + np.abs(ay[:, None] - by[None, :])
    return d_km / cfg.speed_kmh * 3600.0


def zone_of(loc: Location, cfg: AreaConfig) -> int:
    """Row-major index of the grid cell containing ``loc``.

    A point on a cell's max edge belongs to the higher-index cell; the area's
    outer boundary belongs to the last row/column, so the map is total over
    the clipped area.
    """
    col = min(int(loc.x_km / cfg.cell_width_km), cfg.grid_cols - 1)
    row = min(int(loc.y_km / cfg.cell_height_km), cfg.grid_rows - 1)
    return row * cfg.grid_cols + col


def _axis_cell_masses(mean: float, std: float, n_cells: int, cell_size: float) -> np.ndarray:
    """Probability that a clipped 1-d Gaussian lands in each of n_cells bins.

    Clipping maps the tails onto the boundary, which zone_of assigns to the
    first/last cell, so those cells absorb the out-of-area mass.
    """
    edges = np.arange(1, n_cells) * cell_size
    cdf = np.array([0.5 * (1.0 + math.erf((e - mean) / (std * math.sqrt(2.0)))) for e in edges])
    cdf = np.concatenate(([0.0], cdf, [1.0]))
    return np.diff(cdf)


def zone_cell_masses(spec: GaussianArrivalSpec, cfg: AreaConfig) -> np.ndarray:
    """Per-zone probability mass of ``spec``'s clipped location distribution.

    Returns a length-M vector in row-major zone order; sums to 1. Multiplied by
    the arrival rate it gives the expected new arrivals per zone per interval.
    """
    px = _axis_cell_masses(spec.mean.x_km, spec.std[0], cfg.grid_cols, cfg.cell_width_km)
    py = _axis_cell_masses(spec.mean.y_km, spec.std[1], cfg.grid_rows, cfg.cell_height_km)
    return np.outer(py, px).reshape(-1)


def sample_location(spec: GaussianArrivalSpec, cfg: AreaConfig, rng: np.random.Generator) -> Location:
    """Draw one arrival location: independent-axis Gaussian, clipped to the area.

    Consumes exactly one ``rng.normal`` call of size 2 (x then y); the draw
    order is part of the reproducibility contract.
    """
    x, y = rng.normal(loc=(spec.mean.x_km, spec.mean.y_km), scale=spec.std)
    return cfg.clip(x, y)


def sample_count(spec: GaussianArrivalSpec, rng: np.random.Generator, deterministic: bool = False) -> int:
    """Number of arrivals this interval: Poisson(rate), or round(rate) in deterministic mode."""
    if deterministic:
        return int(round(spec.rate_per_interval))
    return int(rng.poisson(spec.rate_per_interval))
