"""Kinematic-bicycle lane-keeping stand-in for the system under test.

A pure-pursuit controller drives a rectangular car along the road
centerline. Every step records the fraction of the car body outside the
lane corridor and the signed distance from the car center to the nearest
lane edge.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .road import RoadGeometry, lane_edges


@dataclass(frozen=True)
class DriverConfig:
    lookahead: float = 20.0
    target_speed: float = 12.0
    wheelbase: float = 2.7
    max_steer: float = 0.6
    car_length: float = 4.5
    car_width: float = 2.0
    dt: float = 0.1
    max_sim_time: float = 60.0
    profile_name: str = "competent"

    def __post_init__(self):
        for name in ("lookahead", "target_speed", "wheelbase", "max_steer",
                     "car_length", "car_width", "dt", "max_sim_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt > 0.1:
            raise ValueError("dt must not exceed 0.1 s")
        if self.lookahead < self.wheelbase:
            raise ValueError("lookahead must be at least the wheelbase")


PROFILES = {
    # fails only when the road sits near the curvature limit
    "competent": DriverConfig(),
    # long lookahead cuts every corner; fails on most curvy roads
    "weak": DriverConfig(lookahead=50.0, target_speed=20.0, profile_name="weak"),
}


def get_profile(name: str, **overrides) -> DriverConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown driver profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(base, **overrides) if overrides else base


class Termination(str, enum.Enum):
    REACHED_END = "ReachedEnd"
    LEFT_LANE = "LeftLane"
    TIME_OUT = "TimeOut"


@dataclass(frozen=True)
class CarState:
    position: tuple[float, float]
    heading: float
    speed: float
    time: float


@dataclass(eq=False)
class SimTrace:
    time: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    oolp_per_step: np.ndarray
    min_edge_distance_per_step: np.ndarray
    termination: Termination

    def __len__(self):
        return len(self.time)

    @property
    def states(self) -> list[CarState]:
        return [CarState((float(x), float(y)), float(h), float(v), float(t))
                for t, x, y, h, v in zip(self.time, self.x, self.y, self.heading, self.speed)]

    def identical_to(self, other: SimTrace) -> bool:
        return self.termination == other.termination and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("time", "x", "y", "heading", "speed", "oolp_per_step", "min_edge_distance_per_step"))

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "x", "y", "heading", "speed", "oolp", "edge_distance"])
            for row in zip(self.time, self.x, self.y, self.heading, self.speed,
                           self.oolp_per_step, self.min_edge_distance_per_step):
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class FitnessResult:
    bolp: float
    edge_fitness: float
    failed: bool
    threshold_used: float
    kind: str = "bolp"

    @property
    def value(self) -> float:
        return self.bolp if self.kind == "bolp" else self.edge_fitness


class UnusableRoadError(ValueError):
    pass


# ---------------------------------------------------------------------------
# polygon area helpers
# ---------------------------------------------------------------------------

def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    n = len(poly)
    s = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def clip_convex(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of ``subject`` by the counter-clockwise convex ``clip``."""
    out = list(subject)
    cx0, cy0 = clip[-1]
    for cx1, cy1 in clip:
        if not out:
            break
        ex, ey = cx1 - cx0, cy1 - cy0
        inp = out
        out = []
        sx, sy = inp[-1]
        s_side = ex * (sy - cy0) - ey * (sx - cx0)
        for px, py in inp:
            p_side = ex * (py - cy0) - ey * (px - cx0)
            if p_side >= 0:
                if s_side < 0:
                    t = s_side / (s_side - p_side)
                    out.append((sx + t * (px - sx), sy + t * (py - sy)))
                out.append((px, py))
            elif s_side >= 0:
                t = s_side / (s_side - p_side)
                out.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
        cx0, cy0 = cx1, cy1
    return out


def car_polygon(cx: float, cy: float, heading: float, length: float, width: float) -> list[tuple[float, float]]:
    """Counter-clockwise car rectangle centered at (cx, cy)."""
    ux, uy = math.cos(heading), math.sin(heading)
    nx, ny = -uy, ux
    hl, hw = length / 2, width / 2
    return [
        (cx - hl * ux - hw * nx, cy - hl * uy - hw * ny),
        (cx + hl * ux - hw * nx, cy + hl * uy - hw * ny),
        (cx + hl * ux + hw * nx, cy + hl * uy + hw * ny),
        (cx - hl * ux + hw * nx, cy - hl * uy + hw * ny),
    ]


AREA_EPS = 1e-9


def extend_ends(geom: RoadGeometry, runout: float) -> RoadGeometry:
    """Geometry with both ends prolonged straight by ``runout`` along the end tangents."""
    c = geom.centerline
    d0 = (c[1] - c[0]) / np.linalg.norm(c[1] - c[0])
    d1 = (c[-1] - c[-2]) / np.linalg.norm(c[-1] - c[-2])
    c = np.vstack([c[0] - runout * d0, c, c[-1] + runout * d1])
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(c, axis=0), axis=1))])
    return RoadGeometry(c, geom.lane_half_width, cum)


@dataclass(eq=False)
class Corridor:
    """Lane polygon as a strip of quads, one per centerline segment."""

    quads: list[list[tuple[float, float]]]
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_geometry(cls, geom: RoadGeometry, runout: float = 0.0) -> Corridor:
        """Build the strip; ``runout`` extends both ends straight along the end tangents."""
        if runout > 0:
            geom = extend_ends(geom, runout)
        left, right = lane_edges(geom)
        quads = []
        for i in range(len(left) - 1):
            q = [tuple(right[i]), tuple(right[i + 1]), tuple(left[i + 1]), tuple(left[i])]
            q = [(float(x), float(y)) for x, y in q]
            if polygon_area(q) < 0:
                q.reverse()
            quads.append(q)
        pts = np.stack([left[:-1], left[1:], right[:-1], right[1:]], axis=1)
        return cls(quads, pts.min(axis=1), pts.max(axis=1))

    def inside_area(self, poly) -> float:
        arr = np.asarray(poly)
        plo, phi = arr.min(axis=0), arr.max(axis=0)
        cand = np.nonzero(np.all((self.lo <= phi) & (self.hi >= plo), axis=1))[0]
        total = 0.0
        for i in cand:
            piece = clip_convex(poly, self.quads[i])
            if len(piece) >= 3:
                total += polygon_area(piece)
        return total


def out_of_lane_fraction(poly, corridor: Corridor) -> float:
    """Share of the polygon's area lying outside the corridor, in [0, 1]."""
    area = abs(polygon_area(poly))
    inside = corridor.inside_area(poly)
    frac = 1.0 - inside / area
    # summing clipped pieces leaves rounding noise around 1e-13
    if frac < AREA_EPS:
        return 0.0
    return min(1.0, frac)


# ---------------------------------------------------------------------------
# centerline queries
# ---------------------------------------------------------------------------

class _Centerline:
    def __init__(self, geom: RoadGeometry):
        self.pts = geom.centerline
        self.a = self.pts[:-1]
        self.d = np.diff(self.pts, axis=0)
        self.len2 = np.einsum("ij,ij->i", self.d, self.d)
        self.cum = geom.cum_arclength
        self.total = float(self.cum[-1])
        self.end_dir = self.d[-1] / math.sqrt(self.len2[-1])

    def project(self, px, py, lo=0, hi=None):
        a, d, len2 = self.a[lo:hi], self.d[lo:hi], self.len2[lo:hi]
        rx, ry = px - a[:, 0], py - a[:, 1]
        t_raw = (rx * d[:, 0] + ry * d[:, 1]) / len2
        t = np.clip(t_raw, 0.0, 1.0)
        dist = np.hypot(rx - t * d[:, 0], ry - t * d[:, 1])
        k = int(np.argmin(dist))
        return lo + k, float(t[k]), float(t_raw[k]), float(dist[k])

    def distance(self, px, py) -> float:
        return self.project(px, py)[3]

    def point_at(self, s: float) -> tuple[float, float]:
        if s >= self.total:
            extra = s - self.total
            return (float(self.pts[-1, 0] + extra * self.end_dir[0]),
                    float(self.pts[-1, 1] + extra * self.end_dir[1]))
        return float(np.interp(s, self.cum, self.pts[:, 0])), float(np.interp(s, self.cum, self.pts[:, 1]))


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def simulate(geom: RoadGeometry, driver: DriverConfig = PROFILES["competent"]) -> SimTrace:
    """Drive the road with pure pursuit; deterministic for fixed inputs."""
    if len(geom.centerline) < 2 or geom.length <= 0:
        raise UnusableRoadError("centerline has zero length")
    line = _Centerline(geom)
    # the car starts and ends half off the road's ends; extend the lane there
    corridor = Corridor.from_geometry(geom, runout=driver.car_length)
    edge_line = _Centerline(extend_ends(geom, driver.car_length))
    w = geom.lane_half_width
    n_seg = len(line.a)

    d0 = line.d[0]
    heading = math.atan2(d0[1], d0[0])
    cx, cy = float(line.pts[0, 0]), float(line.pts[0, 1])
    half_wb = driver.wheelbase / 2
    rx, ry = cx - half_wb * math.cos(heading), cy - half_wb * math.sin(heading)
    v = driver.target_speed
    dt = driver.dt
    n_max = int(math.floor(driver.max_sim_time / dt + 1e-9)) + 1

    rows = []
    seg = 0
    out_since = None
    termination = Termination.TIME_OUT
    for k in range(n_max):
        t = k * dt
        poly = car_polygon(cx, cy, heading, driver.car_length, driver.car_width)
        oolp = out_of_lane_fraction(poly, corridor)
        edge = w - edge_line.distance(cx, cy)
        rows.append((t, cx, cy, heading, v, oolp, edge))

        seg, tseg, t_raw, _ = line.project(cx, cy, max(0, seg - 2), min(n_seg, seg + 25))
        if seg == n_seg - 1 and t_raw >= 1.0:
            termination = Termination.REACHED_END
            break
        if oolp >= 1.0 - 1e-12:
            out_since = t if out_since is None else out_since
            if t - out_since >= 2.0 - 1e-9:
                termination = Termination.LEFT_LANE
                break
        else:
            out_since = None
        if k == n_max - 1:
            break

        s = float(line.cum[seg]) + tseg * math.sqrt(line.len2[seg])
        gx, gy = line.point_at(s + driver.lookahead)
        alpha = _wrap(math.atan2(gy - ry, gx - rx) - heading)
        ld = max(math.hypot(gx - rx, gy - ry), 1e-6)
        steer = math.atan2(2.0 * driver.wheelbase * math.sin(alpha), ld)
        steer = max(-driver.max_steer, min(driver.max_steer, steer))

        rx += v * math.cos(heading) * dt
        ry += v * math.sin(heading) * dt
        heading += v / driver.wheelbase * math.tan(steer) * dt
        cx, cy = rx + half_wb * math.cos(heading), ry + half_wb * math.sin(heading)

    arr = np.array(rows, dtype=float)
    return SimTrace(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5], arr[:, 6], termination)


def recompute_oolp(trace: SimTrace, geom: RoadGeometry, driver: DriverConfig) -> np.ndarray:
    """Out-of-lane fractions of the recorded poses against ``geom``'s corridor."""
    corridor = Corridor.from_geometry(geom, runout=driver.car_length)
    return np.array([
        out_of_lane_fraction(car_polygon(x, y, h, driver.car_length, driver.car_width), corridor)
        for x, y, h in zip(trace.x, trace.y, trace.heading)
    ])


def compute_bolp(trace: SimTrace) -> float:
    if len(trace) == 0:
        raise ValueError("empty trace")
    return float(np.max(trace.oolp_per_step))


def compute_edge_fitness(trace: SimTrace, geom: RoadGeometry) -> float:
    if len(trace) == 0:
        raise ValueError("empty trace")
    closest = float(np.min(trace.min_edge_distance_per_step))
    return min(1.0, max(0.0, 1.0 - closest / geom.lane_half_width))


def classify_failure(fitness: float, threshold: float) -> bool:
    """A test fails when its fitness is strictly over the threshold."""
    return fitness > threshold


def evaluate_fitness(trace: SimTrace, geom: RoadGeometry, kind: str = "bolp",
                     threshold: float = 0.85) -> FitnessResult:
    if kind not in ("bolp", "edge"):
        raise ValueError(f"unknown fitness kind {kind!r}")
    bolp = compute_bolp(trace)
    edge = compute_edge_fitness(trace, geom)
    selected = bolp if kind == "bolp" else edge
    return FitnessResult(bolp, edge, classify_failure(selected, threshold), threshold, kind)
