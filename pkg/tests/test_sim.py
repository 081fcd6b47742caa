import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import monte_carlo_out_fraction
from wogan.road import RoadGeometry, RoadSpec, build_road, decode_test, interpolate, turn_radii
from wogan.sim import (PROFILES, Corridor, DriverConfig, SimTrace, Termination, UnusableRoadError,
                       car_polygon, classify_failure, clip_convex, compute_bolp, compute_edge_fitness,
                       evaluate_fitness, get_profile, out_of_lane_fraction, polygon_area, recompute_oolp,
                       simulate)

W = 4.0


def straight_geom():
    # x = 100 from y = 10 to y = 197.5
    return interpolate(decode_test(np.zeros(10)))


def synthetic_trace(edge, oolp=None):
    n = len(edge)
    z = np.zeros(n)
    return SimTrace(np.arange(n) * 0.1, z, z, z, z, np.zeros(n) if oolp is None else np.asarray(oolp, float),
                    np.asarray(edge, float), Termination.REACHED_END)


def random_valid_geoms(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        _, geom, res = build_road(rng.uniform(-1, 1, 10))
        if res.valid:
            out.append(geom)
    return out


# -- simulate -------------------------------------------------------------

def test_straight_road_competent_driver_stays_in_lane():
    geom = straight_geom()
    trace = simulate(geom, PROFILES["competent"])
    assert trace.termination is Termination.REACHED_END
    assert np.all(trace.oolp_per_step == 0.0)
    assert compute_bolp(trace) == 0.0


def test_sluggish_driver_leaves_lane_on_a_near_limit_road():
    sluggish = DriverConfig(lookahead=2 * PROFILES["competent"].lookahead, profile_name="sluggish")
    rng = np.random.default_rng(1)
    for _ in range(3000):
        _, geom, res = build_road(rng.uniform(-1, 1, 10))
        if not res.valid or turn_radii(geom.centerline).min() >= 49.0:
            continue
        trace = simulate(geom, sluggish)
        if trace.oolp_per_step.max() > 0:
            assert compute_bolp(simulate(geom, PROFILES["competent"])) == 0.0
            return
    pytest.fail("no near-limit road made the sluggish driver leave the lane")


def test_simulation_is_bit_identical():
    geom = random_valid_geoms(1, 4)[0]
    for profile in PROFILES.values():
        assert simulate(geom, profile).identical_to(simulate(geom, profile))


def test_trace_invariants():
    for geom in random_valid_geoms(10, 8):
        trace = simulate(geom, PROFILES["weak"])
        n = len(trace)
        assert all(len(getattr(trace, k)) == n for k in ("x", "y", "heading", "speed", "oolp_per_step",
                                                         "min_edge_distance_per_step"))
        assert np.all((trace.oolp_per_step >= 0) & (trace.oolp_per_step <= 1))
        assert np.all(np.diff(trace.time) > 0) and np.all(trace.speed >= 0)
        states = trace.states
        assert states[0].time == 0.0 and len(states) == n


def test_left_lane_terminates_after_two_seconds_out():
    # a hairpin the weak driver cannot follow
    pts = [(100, 10), (100, 60), (100, 100), (130, 110), (140, 80), (140, 40)]
    geom = interpolate(RoadSpec(tuple(pts)))
    trace = simulate(geom, get_profile("weak", target_speed=25.0))
    assert compute_bolp(trace) == 1.0
    if trace.termination is Termination.LEFT_LANE:
        out = trace.oolp_per_step >= 1.0 - 1e-12
        assert out[-21:].all()


def test_time_out():
    geom = straight_geom()
    trace = simulate(geom, get_profile("competent", target_speed=1.0, max_sim_time=5.0))
    assert trace.termination is Termination.TIME_OUT
    assert trace.time[-1] == pytest.approx(5.0)


def test_zero_length_road_is_unusable():
    geom = RoadGeometry(np.array([[1.0, 1.0], [1.0, 1.0]]), W, np.zeros(2))
    with pytest.raises(UnusableRoadError):
        simulate(geom)


def test_trace_csv_columns(tmp_path):
    trace = simulate(straight_geom())
    path = tmp_path / "t.csv"
    trace.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,x,y,heading,speed,oolp,edge_distance"
    assert len(lines) == len(trace) + 1


def test_driver_config_invariants():
    with pytest.raises(ValueError):
        DriverConfig(dt=0.2)
    with pytest.raises(ValueError):
        DriverConfig(lookahead=1.0, wheelbase=2.7)
    with pytest.raises(ValueError):
        DriverConfig(car_width=0.0)
    with pytest.raises(ValueError):
        get_profile("reckless")


# -- BOLP -----------------------------------------------------------------

def test_bolp_all_inside_is_zero_and_any_full_exit_is_one():
    assert compute_bolp(synthetic_trace([W] * 5)) == 0.0
    assert compute_bolp(synthetic_trace([W] * 5, [0, 0, 1.0, 0.2, 0])) == 1.0


def test_bolp_of_empty_trace_raises():
    with pytest.raises(ValueError):
        compute_bolp(synthetic_trace([]))
    with pytest.raises(ValueError):
        compute_edge_fitness(synthetic_trace([]), straight_geom())


def test_half_overhang_is_one_half():
    geom = straight_geom()
    corridor = Corridor.from_geometry(geom)
    # heading north, centre on the right edge x = 104: half the width sticks out
    poly = car_polygon(100.0 + W, 100.0, math.pi / 2, 4.5, 2.0)
    assert out_of_lane_fraction(poly, corridor) == pytest.approx(0.5, abs=1e-6)


def test_fully_outside_car_is_one():
    corridor = Corridor.from_geometry(straight_geom())
    poly = car_polygon(120.0, 100.0, math.pi / 2, 4.5, 2.0)
    assert out_of_lane_fraction(poly, corridor) == 1.0


def test_clipping_matches_monte_carlo_area():
    rng = np.random.default_rng(21)
    drv = PROFILES["competent"]
    geoms = random_valid_geoms(20, 22)
    worst = 0.0
    for k in range(100):
        geom = geoms[k % len(geoms)]
        corridor = Corridor.from_geometry(geom, runout=drv.car_length)
        c = geom.centerline
        # a pose near the lane edge, away from the road ends
        i = int(rng.integers(10, len(c) - 10))
        d = c[i + 1] - c[i]
        heading = math.atan2(d[1], d[0]) + rng.uniform(-0.6, 0.6)
        nrm = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        off = rng.uniform(-W - 2.5, W + 2.5)
        cx, cy = c[i] + off * nrm
        fast = out_of_lane_fraction(car_polygon(cx, cy, heading, drv.car_length, drv.car_width), corridor)
        slow = monte_carlo_out_fraction(cx, cy, heading, drv.car_length, drv.car_width, c, W, 100_000, rng)
        worst = max(worst, abs(fast - slow))
    assert worst < 0.01


@given(st.floats(-8, 8), st.floats(-math.pi, math.pi))
@settings(max_examples=100, deadline=None)
def test_oolp_is_a_fraction(offset, heading):
    corridor = Corridor.from_geometry(straight_geom())
    f = out_of_lane_fraction(car_polygon(100 + offset, 90.0, heading, 4.5, 2.0), corridor)
    assert 0.0 <= f <= 1.0


def test_shrinking_the_lane_never_lowers_bolp():
    drv = PROFILES["weak"]
    for geom in random_valid_geoms(8, 30):
        trace = simulate(geom, drv)
        prev = -1.0
        for w in (4.0, 3.5, 3.0, 2.0, 1.2):
            b = float(recompute_oolp(trace, geom.with_lane_half_width(w), drv).max())
            assert b >= prev
            prev = b


def test_recompute_matches_simulation():
    geom = random_valid_geoms(1, 31)[0]
    trace = simulate(geom, PROFILES["weak"])
    assert np.array_equal(recompute_oolp(trace, geom, PROFILES["weak"]), trace.oolp_per_step)


# -- polygon helpers ------------------------------------------------------

def test_polygon_area_and_clip():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert polygon_area(sq) == 4.0
    assert polygon_area(sq[::-1]) == -4.0
    piece = clip_convex(sq, [(1, -1), (3, -1), (3, 3), (1, 3)])
    assert polygon_area(piece) == pytest.approx(2.0)
    assert clip_convex(sq, [(5, 5), (6, 5), (6, 6), (5, 6)]) == []


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=100, deadline=None)
def test_clip_is_idempotent(dx, dy):
    sq = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]
    window = [(dx, dy), (dx + 2.5, dy), (dx + 2.5, dy + 2.5), (dx, dy + 2.5)]
    once = clip_convex(sq, window)
    if len(once) >= 3:
        twice = clip_convex(once, window)
        assert polygon_area(twice) == pytest.approx(polygon_area(once), abs=1e-9)


# -- edge fitness ---------------------------------------------------------

def test_edge_fitness_examples():
    geom = straight_geom()
    assert compute_edge_fitness(synthetic_trace([W] * 10), geom) == 0.0
    assert compute_edge_fitness(synthetic_trace([W, W, 0.0, W]), geom) == 1.0
    assert compute_edge_fitness(synthetic_trace([W / 2] * 10), geom) == 0.5
    assert compute_edge_fitness(synthetic_trace([W, -3.0]), geom) == 1.0


def test_edge_fitness_informative_when_bolp_is_zero():
    for geom in random_valid_geoms(10, 40):
        trace = simulate(geom, PROFILES["competent"])
        if compute_bolp(trace) == 0.0 and compute_edge_fitness(trace, geom) > 0.0:
            return
    pytest.fail("no trace with zero BOLP and positive edge fitness")


def test_straight_centered_driving_has_near_zero_edge_fitness():
    geom = straight_geom()
    assert compute_edge_fitness(simulate(geom), geom) < 1e-9


# -- failure --------------------------------------------------------------

@pytest.mark.parametrize("fitness,threshold,expected", [
    (0.86, 0.85, True), (0.10, 0.10, False), (0.0, 0.10, False), (0.85, 0.85, False), (1.0, 0.85, True)])
def test_classify_failure(fitness, threshold, expected):
    assert classify_failure(fitness, threshold) is expected


def test_evaluate_fitness_selects_kind():
    geom = random_valid_geoms(1, 50)[0]
    trace = simulate(geom, PROFILES["weak"])
    b = evaluate_fitness(trace, geom, "bolp", 0.1)
    e = evaluate_fitness(trace, geom, "edge", 0.1)
    assert b.value == b.bolp and e.value == e.edge_fitness
    assert b.failed == (b.bolp > 0.1) and e.failed == (e.edge_fitness > 0.1)
    with pytest.raises(ValueError):
        evaluate_fitness(trace, geom, "speed")
