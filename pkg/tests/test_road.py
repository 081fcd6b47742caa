import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_self_intersects
from wogan.road import (DEFAULT_MAP, MAX_SEGMENT, MAX_TURN, MIN_SEGMENT, DegenerateRoadError, MapSpec,
                        RoadSpec, Validity, build_road, decode_test, interpolate, lane_edges,
                        segment_intersections, turn_radii, validate)

vectors = st.lists(st.floats(-1, 1, allow_nan=False), min_size=10, max_size=10).map(np.array)


def spec_of(points):
    return RoadSpec(tuple((float(x), float(y)) for x, y in points))


def circle_points(cx, cy, r, start_deg, step_deg, n=6):
    a = np.radians(start_deg + step_deg * np.arange(n))
    return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])


# -- decode ---------------------------------------------------------------

def test_zero_vector_is_straight_north():
    spec = decode_test(np.zeros(10))
    pts = spec.as_array()
    assert np.all(pts[:, 0] == 100.0)
    gaps = np.diff(pts[:, 1])
    mid = MIN_SEGMENT + 0.5 * (MAX_SEGMENT - MIN_SEGMENT)
    assert np.allclose(gaps, mid)
    assert not spec.clamped


def test_constant_turn_lies_on_analytic_arc():
    c = 0.6
    v = np.array([c, 0.0] * 5)
    pts = decode_test(v).as_array()
    L = MIN_SEGMENT + 0.5 * (MAX_SEGMENT - MIN_SEGMENT)
    expected = L / (2 * math.sin(c * MAX_TURN / 2))
    # circumcentre of the first three points, then every point's distance to it
    (ax, ay), (bx, by), (cx, cy) = pts[:3]
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    radii = np.hypot(pts[:, 0] - ux, pts[:, 1] - uy)
    assert np.all(np.abs(radii - expected) / expected < 0.01)


def test_decode_is_continuous():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.uniform(-1, 1, 10)
        w = np.clip(v + rng.uniform(-1e-6, 1e-6, 10), -1, 1)
        diff = np.abs(decode_test(v).as_array() - decode_test(w).as_array()).max()
        assert diff <= 1e-3


def test_out_of_range_components_are_clamped_and_flagged():
    v = np.zeros(10)
    v[1] = 3.0
    spec = decode_test(v)
    assert spec.clamped
    ref = np.zeros(10)
    ref[1] = 1.0
    assert spec.points == decode_test(ref).points


def test_decode_rejects_wrong_length():
    with pytest.raises(ValueError):
        decode_test(np.zeros(9))


@given(vectors)
@settings(max_examples=200, deadline=None)
def test_decode_deterministic_and_anchored(v):
    a, b = decode_test(v), decode_test(v.copy())
    assert a == b
    assert a.points[0] == DEFAULT_MAP.start_anchor
    # first leg is exactly north
    assert a.points[1][0] == a.points[0][0] and a.points[1][1] > a.points[0][1]
    gaps = np.linalg.norm(np.diff(a.as_array(), axis=0), axis=1)
    assert np.all(gaps >= MIN_SEGMENT - 1e-9) and np.all(gaps <= MAX_SEGMENT + 1e-9)


def test_road_json_has_six_decimals():
    spec = spec_of([(1 / 3, 2 / 3)] * 6)
    assert spec.to_json()[0] == [0.333333, 0.666667]


# -- interpolate ----------------------------------------------------------

def test_collinear_knots_give_collinear_centerline():
    geom = interpolate(decode_test(np.zeros(10)))
    assert np.abs(geom.centerline[:, 0] - 100.0).max() < 1e-9


def _inner_curvature(geom):
    k = geom.knot_indices
    return 1.0 / turn_radii(geom.centerline)[k[1]:k[-2] - 1]


def test_circle_knots_have_circle_curvature():
    # 12 degree spacing, chords of 12.5 m
    geom = interpolate(spec_of(circle_points(100, 100, 60, -90, 12)), step=1.0)
    assert np.all(np.abs(_inner_curvature(geom) * 60 - 1) < 0.05)


def test_sparse_circle_knots_keep_mean_curvature():
    # at 30 degree spacing the spline wobbles around the circle but averages to it
    geom = interpolate(spec_of(circle_points(100, 100, 60, -60, 30)), step=1.0)
    assert abs(np.mean(_inner_curvature(geom)) * 60 - 1) < 0.01


def test_halving_step_barely_changes_length():
    rng = np.random.default_rng(11)
    for _ in range(20):
        spec = decode_test(rng.uniform(-1, 1, 10))
        a = interpolate(spec, 2.0).length
        b = interpolate(spec, 1.0).length
        assert abs(a - b) / b < 1e-3


@given(vectors, st.floats(0.25, 2.0))
@settings(max_examples=100, deadline=None)
def test_interpolation_spacing_and_knots(v, step):
    spec = decode_test(v)
    geom = interpolate(spec, step)
    gaps = np.linalg.norm(np.diff(geom.centerline, axis=0), axis=1)
    assert gaps.max() <= step + 1e-9
    pts = spec.as_array()
    assert np.abs(geom.centerline[list(geom.knot_indices)] - pts).max() < 1e-6
    assert np.all(np.diff(geom.cum_arclength) > 0)


def test_coincident_points_are_degenerate():
    pts = [(100, 10), (100, 40), (100, 40.5), (100, 80), (100, 120), (100, 150)]
    with pytest.raises(DegenerateRoadError):
        interpolate(spec_of(pts))


def test_step_bounds():
    spec = decode_test(np.zeros(10))
    for bad in (0.0, -1.0, 2.5):
        with pytest.raises(ValueError):
            interpolate(spec, bad)


# -- validate -------------------------------------------------------------

def test_straight_centered_road_is_valid():
    pts = [(100, 50 + 20 * i) for i in range(6)]
    assert validate(interpolate(spec_of(pts))).status is Validity.VALID


def test_point_beyond_map_is_out_of_bounds():
    v = np.zeros(10)
    v[1::2] = 1.0  # 10 + 5 * 60 = 310 m north
    spec = decode_test(v)
    assert spec.points[4][1] == 250.0
    _, _, res = build_road(v)
    assert res.status is Validity.OUT_OF_BOUNDS


def test_lane_edge_outside_map_is_out_of_bounds():
    # centerline inside the map, lane edge 2 m beyond x = 0
    pts = [(2, 20 + 20 * i) for i in range(6)]
    geom = interpolate(spec_of(pts))
    assert geom.centerline[:, 0].min() >= 0
    assert validate(geom).status is Validity.OUT_OF_BOUNDS


def test_figure_of_eight_self_intersects():
    pts = [(60, 40), (140, 120), (140, 60), (60, 140), (60, 180), (100, 190)]
    geom = interpolate(spec_of(pts))
    assert brute_force_self_intersects(geom.centerline)
    assert segment_intersections(geom.centerline) is not None
    assert validate(geom).status is Validity.SELF_INTERSECTING


def test_tightest_turns_are_too_sharp():
    v = np.array([1.0, -1.0] * 5)
    _, _, res = build_road(v)
    assert res.status is Validity.TOO_SHARP


def test_check_order_bounds_before_intersection():
    # a crossing loop that also leaves the map reports the bounds failure
    pts = [(10, 10), (190, 190), (190, 10), (10, 190), (10, 100), (100, 5)]
    res = validate(interpolate(spec_of(pts)))
    assert res.status is Validity.OUT_OF_BOUNDS


def test_min_turn_radius_is_configurable():
    # the end intervals bend tighter than the 80 m circle, about 47.7 m
    geom = interpolate(spec_of(circle_points(100, 100, 80, -90, 12)))
    assert validate(geom).status is Validity.VALID
    tight = MapSpec(min_turn_radius=50.0)
    assert validate(geom, tight).status is Validity.TOO_SHARP


def test_intersection_matches_brute_force_on_random_polygons():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(300):
        # wide turns so that crossings actually happen
        heading, p = math.pi / 2, np.array([100.0, 100.0])
        pts = [p.copy()]
        for _ in range(5):
            heading += rng.uniform(-2.2, 2.2)
            p = p + rng.uniform(15, 60) * np.array([math.cos(heading), math.sin(heading)])
            pts.append(p.copy())
        geom = interpolate(spec_of(pts))
        expected = brute_force_self_intersects(geom.centerline)
        assert (segment_intersections(geom.centerline) is not None) == expected
        hits += expected
    assert hits >= 10


def test_lane_edges_are_offset_by_half_width():
    geom = interpolate(decode_test(np.zeros(10)))
    left, right = lane_edges(geom)
    assert np.allclose(left[:, 0], 100 - 4) and np.allclose(right[:, 0], 100 + 4)


def test_map_spec_invariants():
    for kw in ({"side_length": 0}, {"lane_half_width": -1}, {"min_turn_radius": 0}):
        with pytest.raises(ValueError):
            MapSpec(**kw)
