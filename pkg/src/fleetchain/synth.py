"""Deterministic synthetic trips for tests, demos and the workflow runner.

Routes are laid out along a single great-circle bearing, so the path length
of a generated trip equals the requested length and endpoint geometry is
known in closed form.  Sample spacing and speeds are jittered with a seeded
generator to mimic recorder output with uneven granularity.
"""

from __future__ import annotations

import math
import random

from .fcd import GpsPoint, RouteQuery, Trip
from .geo import destination_point

DEFAULT_START = (48.115, 16.570)
DEFAULT_BEARING_DEG = 225.0
DEFAULT_LENGTH_KM = 44.3
DEFAULT_POINTS = 300
DEFAULT_SPEED_KMH = 80.0


def synthetic_trip(
    trip_id: str,
    *,
    start: tuple[float, float] = DEFAULT_START,
    bearing_deg: float = DEFAULT_BEARING_DEG,
    length_km: float = DEFAULT_LENGTH_KM,
    n_points: int = DEFAULT_POINTS,
    base_speed_kmh: float = DEFAULT_SPEED_KMH,
    start_time: float = 0.0,
    seed: int = 0,
) -> Trip:
    """Generate a trip of ``n_points`` samples along a fixed bearing.

    Consecutive sample gaps vary around the mean spacing and the speed
    profile undulates around ``base_speed_kmh``; both are reproducible from
    ``seed``.  Timestamps follow from distance and local speed.
    """
    if n_points < 2:
        raise ValueError("need at least 2 points")
    if length_km <= 0:
        raise ValueError("length_km must be positive")
    rng = random.Random(seed)
    total_m = length_km * 1000.0

    # uneven but strictly increasing arc positions covering [0, total_m]
    gaps = [0.5 + rng.random() for _ in range(n_points - 1)]
    scale = total_m / sum(gaps)
    dists = [0.0]
    for g in gaps:
        dists.append(dists[-1] + g * scale)
    dists[-1] = total_m

    points = []
    t = start_time
    prev_d = 0.0
    for i, d in enumerate(dists):
        frac = d / total_m
        speed = base_speed_kmh * (1.0 + 0.15 * math.sin(2.0 * math.pi * 3.0 * frac))
        speed *= 1.0 + 0.05 * (rng.random() - 0.5)
        speed = max(speed, 5.0)
        if i > 0:
            # advance time so the segment is covered at its mean speed
            seg = d - prev_d
            v_mps = (speed + points[-1].speed_kmh) / 2.0 / 3.6
            t += seg / v_mps
        lat, lon = destination_point(start[0], start[1], bearing_deg, d)
        points.append(GpsPoint(t, lat, lon, speed, trip_id))
        prev_d = d
    return Trip(id=trip_id, points=tuple(points))


def route_query_for(
    start: tuple[float, float] = DEFAULT_START,
    bearing_deg: float = DEFAULT_BEARING_DEG,
    length_km: float = DEFAULT_LENGTH_KM,
    radius_m: float = 3000.0,
) -> RouteQuery:
    """Origin/destination query matching :func:`synthetic_trip` geometry."""
    dest = destination_point(start[0], start[1], bearing_deg, length_km * 1000.0)
    return RouteQuery(origin=start, destination=dest, radius_m=radius_m)


def constant_speed_trip(
    trip_id: str,
    *,
    length_m: float,
    speed_mps: float,
    n_points: int = 2,
    start: tuple[float, float] = DEFAULT_START,
    bearing_deg: float = 90.0,
    start_time: float = 0.0,
) -> Trip:
    """Straight constant-speed trip; handy for closed-form expectations."""
    if n_points < 2:
        raise ValueError("need at least 2 points")
    points = []
    for i in range(n_points):
        d = length_m * i / (n_points - 1)
        lat, lon = destination_point(start[0], start[1], bearing_deg, d)
        points.append(
            GpsPoint(start_time + d / speed_mps, lat, lon, speed_mps * 3.6, trip_id)
        )
    return Trip(id=trip_id, points=tuple(points))
