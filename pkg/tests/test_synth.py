from __future__ import annotations

import math

import pytest

from fleetchain.fcd import extract_route_trips
from fleetchain.synth import constant_speed_trip, route_query_for, synthetic_trip


def test_path_length_matches_request():
    # single-bearing layout: arc positions sum exactly to the request
    trip = synthetic_trip("len", length_km=5.0, n_points=50, seed=8)
    assert math.isclose(trip.path_length_m(), 5000.0, rel_tol=1e-9)


def test_point_count_and_determinism():
    a = synthetic_trip("d", length_km=2.0, n_points=33, seed=123)
    b = synthetic_trip("d", length_km=2.0, n_points=33, seed=123)
    c = synthetic_trip("d", length_km=2.0, n_points=33, seed=124)
    assert len(a.points) == 33
    assert a == b
    assert a != c


def test_uneven_sampling():
    trip = synthetic_trip("u", length_km=2.0, n_points=40, seed=5)
    gaps = [
        b.timestamp - a.timestamp for a, b in zip(trip.points, trip.points[1:])
    ]
    assert len(set(round(g, 6) for g in gaps)) > 1


def test_generated_trip_matches_its_route_query():
    trip = synthetic_trip("q", length_km=10.0, n_points=60, seed=2)
    query = route_query_for(length_km=10.0, radius_m=500.0)
    assert extract_route_trips([trip], query) == [trip]


def test_constant_speed_trip_timing():
    trip = constant_speed_trip("cs", length_m=400.0, speed_mps=20.0, n_points=5)
    assert math.isclose(trip.duration_s(), 20.0, rel_tol=1e-12)
    assert all(p.speed_kmh == 72.0 for p in trip.points)


def test_validation():
    with pytest.raises(ValueError):
        synthetic_trip("bad", n_points=1)
    with pytest.raises(ValueError):
        synthetic_trip("bad", length_km=0.0)
