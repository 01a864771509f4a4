"""Request/driver-shift tables for the calibrated environment.

Input schemas (CSV, UTF-8, header required):

    requests: passenger_id,request_epoch_s,origin_lng,origin_lat,dest_lng,dest_lat,trip_duration_s
    shifts:   driver_id,online_epoch_s,online_lng,online_lat,offline_epoch_s

Longitude/latitude are projected to local km offsets with an equirectangular
approximation around the configured area center (adequate at the ~20 km
scale). Ingestion turns tables into deterministic per-interval arrival /
online / offline schedules, optionally bootstrapping rows (sampling with
replacement within a time bin). A synthetic generator writes schema-conformant
tables so the calibrated pipeline can run end to end without proprietary data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from dispatchlab.geometry import AreaConfig, Location
from dispatchlab.sim import DriverSpawn, RequestSpawn, ScheduledArrivals

__all__ = [
    "CalibratedConfig",
    "SyntheticTablesConfig",
    "REQUEST_COLUMNS",
    "SHIFT_COLUMNS",
    "project_to_km",
    "project_to_lnglat",
    "ingest_calibrated_tables",
    "generate_synthetic_tables",
    "TableFormatError",
]

EARTH_RADIUS_KM = 6371.0088

REQUEST_COLUMNS = ["passenger_id", "request_epoch_s", "origin_lng", "origin_lat",
                   "dest_lng", "dest_lat", "trip_duration_s"]
SHIFT_COLUMNS = ["driver_id", "online_epoch_s", "online_lng", "online_lat", "offline_epoch_s"]


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CalibratedConfig:
    """Where the examined area sits on the globe and which time window to replay."""

    area: AreaConfig = field(default_factory=lambda: AreaConfig(
        width_km=20.0, height_km=20.0, grid_rows=20, grid_cols=20,
        speed_kmh=25.0, interval_seconds=1.0))
    center_lng: float = 114.17
    center_lat: float = 22.30
    window_start_epoch_s: float = 0.0
    horizon: int = 120
    resample: bool = False
    bootstrap_bin_intervals: int = 60
    max_wait_intervals: int | None = None
    rate_bin_intervals: int = 60


def project_to_km(lng: float, lat: float, cfg: CalibratedConfig) -> tuple[float, float]:
    """Equirectangular lng/lat -> km offsets from the area's south-west corner."""
    x = math.radians(lng - cfg.center_lng) * EARTH_RADIUS_KM * math.cos(math.radians(cfg.center_lat))
    y = math.radians(lat - cfg.center_lat) * EARTH_RADIUS_KM
    return x + cfg.area.width_km / 2.0, y + cfg.area.height_km / 2.0


def project_to_lnglat(x_km: float, y_km: float, cfg: CalibratedConfig) -> tuple[float, float]:
    """Inverse of project_to_km."""
    dx = x_km - cfg.area.width_km / 2.0
    dy = y_km - cfg.area.height_km / 2.0
    lng = cfg.center_lng + math.degrees(dx / (EARTH_RADIUS_KM * math.cos(math.radians(cfg.center_lat))))
    lat = cfg.center_lat + math.degrees(dy / EARTH_RADIUS_KM)
    return lng, lat


def _read_rows(path, columns, label):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{label}: empty file, expected header {','.join(columns)}")
        if header != columns:
            raise TableFormatError(f"{label}: bad header {header!r}, expected {columns!r}")
        return list(reader)


def _parse_float(value, label, row_no, col):
    try:
        out = float(value)
    except ValueError:
        raise TableFormatError(f"{label} row {row_no}: {col}={value!r} is not a number")
    if not math.isfinite(out):
        raise TableFormatError(f"{label} row {row_no}: {col} must be finite")
    return out


_BOUNDARY_SLACK_KM = 1e-9  # forgive projection round-trip noise at the exact boundary


def _location_in_area(lng, lat, cfg, label, row_no, what) -> Location:
    x, y = project_to_km(lng, lat, cfg)
    area = cfg.area
    if not (-_BOUNDARY_SLACK_KM <= x <= area.width_km + _BOUNDARY_SLACK_KM
            and -_BOUNDARY_SLACK_KM <= y <= area.height_km + _BOUNDARY_SLACK_KM):
        raise TableFormatError(
            f"{label} row {row_no}: {what} ({lng}, {lat}) projects to ({x:.3f}, {y:.3f}) km, "
            f"outside the {area.width_km} x {area.height_km} km area")
    return area.clip(x, y)


def _interval_of(epoch_s: float, cfg: CalibratedConfig) -> int:
    return math.floor((epoch_s - cfg.window_start_epoch_s) / cfg.area.interval_seconds)


def ingest_calibrated_tables(requests_path, shifts_path, cfg: CalibratedConfig,
                             rng: np.random.Generator | None = None) -> ScheduledArrivals:
    """Turn request/shift tables into a deterministic per-interval schedule.

    Rows outside the configured window are dropped (drivers already online at
    the window start are clamped to interval 0). With cfg.resample set, request
    rows are bootstrapped with replacement within each time bin; pass the rng
    that seeds the bootstrap.
    """
    req_rows = _read_rows(requests_path, REQUEST_COLUMNS, "requests")
    shift_rows = _read_rows(shifts_path, SHIFT_COLUMNS, "shifts")

    requests: list[tuple[int, RequestSpawn]] = []
    for k, row in enumerate(req_rows, start=2):  # header is row 1
        if len(row) != len(REQUEST_COLUMNS):
            raise TableFormatError(f"requests row {k}: expected {len(REQUEST_COLUMNS)} fields, got {len(row)}")
        epoch = _parse_float(row[1], "requests", k, "request_epoch_s")
        origin = _location_in_area(_parse_float(row[2], "requests", k, "origin_lng"),
                                   _parse_float(row[3], "requests", k, "origin_lat"),
                                   cfg, "requests", k, "origin")
        dest = _location_in_area(_parse_float(row[4], "requests", k, "dest_lng"),
                                 _parse_float(row[5], "requests", k, "dest_lat"),
                                 cfg, "requests", k, "destination")
        trip = _parse_float(row[6], "requests", k, "trip_duration_s")
        if trip < 0:
            raise TableFormatError(f"requests row {k}: trip_duration_s must be >= 0")
        t = _interval_of(epoch, cfg)
        if 0 <= t < cfg.horizon:
            requests.append((t, RequestSpawn(origin=origin, destination=dest, trip_duration_s=trip)))

    drivers: list[tuple[int, DriverSpawn]] = []
    for k, row in enumerate(shift_rows, start=2):
        if len(row) != len(SHIFT_COLUMNS):
            raise TableFormatError(f"shifts row {k}: expected {len(SHIFT_COLUMNS)} fields, got {len(row)}")
        online = _parse_float(row[1], "shifts", k, "online_epoch_s")
        offline = _parse_float(row[4], "shifts", k, "offline_epoch_s")
        if offline <= online:
            raise TableFormatError(
                f"shifts row {k}: offline_epoch_s ({offline}) must be after online_epoch_s ({online})")
        loc = _location_in_area(_parse_float(row[2], "shifts", k, "online_lng"),
                                _parse_float(row[3], "shifts", k, "online_lat"),
                                cfg, "shifts", k, "online position")
        t_on = _interval_of(online, cfg)
        t_off = _interval_of(offline, cfg)
        if t_off <= 0 or t_on >= cfg.horizon:
            continue  # entirely outside the window
        drivers.append((max(t_on, 0), DriverSpawn(location=loc, offline_at=t_off)))

    if cfg.resample:
        if rng is None:
            raise ValueError("resampling requires an rng")
        requests = _bootstrap_rows(requests, cfg.bootstrap_bin_intervals, rng)

    requests_by_interval: dict[int, list] = {}
    for t, spawn in requests:
        requests_by_interval.setdefault(t, []).append(spawn)
    drivers_by_interval: dict[int, list] = {}
    for t, spawn in drivers:
        drivers_by_interval.setdefault(t, []).append(spawn)
    return ScheduledArrivals(cfg.area, requests_by_interval, drivers_by_interval,
                             cfg.horizon, cfg.rate_bin_intervals)


def _bootstrap_rows(rows, bin_intervals: int, rng: np.random.Generator):
    """Sample rows with replacement inside each time bin, keeping bin sizes."""
    bin_intervals = max(1, int(bin_intervals))
    bins: dict[int, list] = {}
    for t, spawn in rows:
        bins.setdefault(t // bin_intervals, []).append((t, spawn))
    out = []
    for b in sorted(bins):
        members = bins[b]
        picks = rng.integers(0, len(members), size=len(members))
        out.extend(members[i] for i in picks)
    return out


@dataclass(frozen=True)
class SyntheticTablesConfig:
    """Spatio-temporal rates for generating stand-in calibrated tables."""

    calibrated: CalibratedConfig = field(default_factory=CalibratedConfig)
    passenger_rate: float = 2.0         # expected requests per interval
    driver_rate: float = 2.0            # expected new shifts per interval
    origin_mean_km: tuple = (6.0, 6.0)
    origin_std_km: tuple = (3.0, 3.0)
    dest_mean_km: tuple = (14.0, 14.0)
    dest_std_km: tuple = (3.0, 3.0)
    driver_mean_km: tuple = (10.0, 10.0)
    driver_std_km: tuple = (4.0, 4.0)
    shift_min_s: float = 120.0
    shift_max_s: float = 1800.0


def _clipped_gaussian_km(mean, std, area, rng) -> tuple[float, float]:
    x, y = rng.normal(loc=mean, scale=std)
    return min(max(x, 0.0), area.width_km), min(max(y, 0.0), area.height_km)


def generate_synthetic_tables(cfg: SyntheticTablesConfig, rng: np.random.Generator,
                              requests_path, shifts_path):
    """Write schema-conformant request and shift tables drawn from cfg's rates."""
    cal = cfg.calibrated
    area = cal.area
    with open(requests_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REQUEST_COLUMNS)
        pid = 0
        for t in range(cal.horizon):
            for _ in range(int(rng.poisson(cfg.passenger_rate))):
                ox, oy = _clipped_gaussian_km(cfg.origin_mean_km, cfg.origin_std_km, area, rng)
                dx, dy = _clipped_gaussian_km(cfg.dest_mean_km, cfg.dest_std_km, area, rng)
                epoch = cal.window_start_epoch_s + (t + float(rng.random())) * area.interval_seconds
                trip_s = (abs(ox - dx) + abs(oy - dy)) / area.speed_kmh * 3600.0
                o_lng, o_lat = project_to_lnglat(ox, oy, cal)
                d_lng, d_lat = project_to_lnglat(dx, dy, cal)
                w.writerow([f"p{pid:06d}", repr(epoch), repr(o_lng), repr(o_lat),
                            repr(d_lng), repr(d_lat), repr(trip_s)])
                pid += 1
    with open(shifts_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SHIFT_COLUMNS)
        did = 0
        for t in range(cal.horizon):
            for _ in range(int(rng.poisson(cfg.driver_rate))):
                x, y = _clipped_gaussian_km(cfg.driver_mean_km, cfg.driver_std_km, area, rng)
                online = cal.window_start_epoch_s + (t + float(rng.random())) * area.interval_seconds
                offline = online + float(rng.uniform(cfg.shift_min_s, cfg.shift_max_s))
                lng, lat = project_to_lnglat(x, y, cal)
                w.writerow([f"d{did:06d}", repr(online), repr(lng), repr(lat), repr(offline)])
                did += 1
    return requests_path, shifts_path
