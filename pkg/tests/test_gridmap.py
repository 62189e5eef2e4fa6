import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasr.gridmap import DEGENERATE_EPS, GridError, RegionBounds, fit_bounds, map_to_cell
from pasr.pipeline.dataset import parse_lines


def test_fit_bounds_min_max():
    assert fit_bounds([0, 1], [0, 2]).as_tuple() == (0, 1, 0, 2)


def test_single_point_widened():
    b = fit_bounds([5.0], [7.0])
    assert b.as_tuple() == (5.0 - DEGENERATE_EPS, 5.0 + DEGENERATE_EPS, 7.0 - DEGENERATE_EPS, 7.0 + DEGENERATE_EPS)


def test_empty_rejected():
    with pytest.raises(GridError):
        fit_bounds([], [])


def test_bounds_from_sample_file():
    rows = [
        "u1\t2010-10-19T23:55:27Z\t30.2359091167\t-97.7951395833\t22847",
        "u1\t2010-10-18T22:17:43Z\t30.2691029532\t-97.7493953705\t420315",
        "u2\t2010-10-17T23:42:03Z\t30.2557309927\t-97.7633857727\t316637",
    ]
    ds = parse_lines(rows)
    b = fit_bounds(ds.lat, ds.lon)
    assert b.as_tuple() == (30.2359091167, 30.2691029532, -97.7951395833, -97.7493953705)


def test_corners_and_worked_example():
    b = RegionBounds(0, 10, 0, 10)
    assert map_to_cell(0, 0, b, 5) == (0, 0)
    assert map_to_cell(10, 10, b, 5) == (4, 4)
    assert map_to_cell(4.0, 9.0, b, 5) == (2, 4)


def test_out_of_region_clamps():
    b = RegionBounds(0, 10, 0, 10)
    assert map_to_cell(-3, 12, b, 5) == (0, 4)


def test_bad_interval_count():
    with pytest.raises(GridError):
        map_to_cell(1, 1, RegionBounds(0, 2, 0, 2), 0)


def test_empty_region_rejected():
    with pytest.raises(GridError):
        RegionBounds(1, 1, 0, 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 15), st.floats(-5, 15), st.integers(1, 60))
def test_locality_and_coverage(lat, lon, g):
    b = RegionBounds(0, 10, 0, 10)
    r, c = map_to_cell(lat, lon, b, g)
    assert 0 <= r < g and 0 <= c < g
    pitch = 10 / g
    r2, c2 = map_to_cell(lat + 0.99 * pitch, lon - 0.99 * pitch, b, g)
    assert abs(r2 - r) <= 1 and abs(c2 - c) <= 1


def test_vectorised_matches_scalar(rng):
    b = RegionBounds(40.5, 41.0, -74.3, -73.6)
    lat = rng.uniform(40.4, 41.1, 200)
    lon = rng.uniform(-74.4, -73.5, 200)
    rows, cols = map_to_cell(lat, lon, b, 50)
    assert [(int(r), int(c)) for r, c in zip(rows, cols)] == [map_to_cell(a, o, b, 50) for a, o in zip(lat, lon)]
