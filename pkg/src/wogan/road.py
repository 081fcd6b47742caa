"""Road encoding, spline interpolation and validity checks.

A test is a vector in [-1, 1]^10 holding five (turn, length) pairs. It
decodes into six control points starting at a fixed anchor and heading due
north, which are then interpolated with a centripetal Catmull-Rom spline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TEST_DIM = 10
N_POINTS = 6
NORTH = math.pi / 2

MAX_TURN = math.radians(20.0)
MIN_SEGMENT = 15.0
MAX_SEGMENT = 60.0
MIN_KNOT_SPACING = 1.0


@dataclass(frozen=True)
class MapSpec:
    side_length: float = 200.0
    start_anchor: tuple[float, float] = (100.0, 10.0)
    lane_half_width: float = 4.0
    min_turn_radius: float = 47.0
    coverage_grid_cells: int = 20

    def __post_init__(self):
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        if self.lane_half_width <= 0:
            raise ValueError("lane_half_width must be positive")
        if self.min_turn_radius <= 0:
            raise ValueError("min_turn_radius must be positive")
        if self.coverage_grid_cells < 1:
            raise ValueError("coverage_grid_cells must be at least 1")


DEFAULT_MAP = MapSpec()


@dataclass(frozen=True)
class RoadSpec:
    """Six control points in map coordinates (meters)."""

    points: tuple[tuple[float, float], ...]
    clamped: bool = False

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def to_json(self) -> list[list[float]]:
        return [[round(x, 6), round(y, 6)] for x, y in self.points]


@dataclass(frozen=True, eq=False)
class RoadGeometry:
    centerline: np.ndarray  # (n, 2)
    lane_half_width: float
    cum_arclength: np.ndarray  # (n,)
    knot_indices: tuple[int, ...] = ()

    @property
    def length(self) -> float:
        return float(self.cum_arclength[-1])

    def with_lane_half_width(self, w: float) -> RoadGeometry:
        return RoadGeometry(self.centerline, w, self.cum_arclength, self.knot_indices)


class Validity(str, enum.Enum):
    VALID = "Valid"
    OUT_OF_BOUNDS = "OutOfBounds"
    SELF_INTERSECTING = "SelfIntersecting"
    TOO_SHARP = "TooSharp"
    DEGENERATE_SPACING = "DegenerateSpacing"


@dataclass(frozen=True)
class ValidityResult:
    status: Validity
    detail: str = ""

    @property
    def valid(self) -> bool:
        return self.status is Validity.VALID


class DegenerateRoadError(ValueError):
    """Two consecutive control points are (nearly) coincident."""


def decode_test(v, map_spec: MapSpec = DEFAULT_MAP) -> RoadSpec:
    """Decode a test vector into six control points.

    The first segment always heads north. The turn component of pair ``i``
    rotates the heading at control point ``i``, so the turn of the final
    pair has no effect on the road. Out-of-range components are clamped and
    the result is flagged.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (TEST_DIM,):
        raise ValueError(f"test vector must have {TEST_DIM} components, got shape {v.shape}")
    clipped = np.clip(v, -1.0, 1.0)
    clamped = bool(np.any(clipped != v)) or bool(np.any(np.isnan(v)))
    clipped = np.nan_to_num(clipped, nan=0.0)

    x, y = (float(c) for c in map_spec.start_anchor)
    points = [(x, y)]
    heading = NORTH
    for i in range(N_POINTS - 1):
        seg = MIN_SEGMENT + (float(clipped[2 * i + 1]) + 1.0) / 2.0 * (MAX_SEGMENT - MIN_SEGMENT)
        if i == 0:
            # exact north for the first leg, no cos(pi/2) residue
            y = y + seg
        else:
            heading += float(clipped[2 * (i - 1)]) * MAX_TURN
            x = x + seg * math.cos(heading)
            y = y + seg * math.sin(heading)
        points.append((x, y))
    return RoadSpec(tuple(points), clamped=clamped)


def _knot_params(p: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    d = np.linalg.norm(np.diff(p, axis=0), axis=1) ** alpha
    return np.concatenate([[0.0], np.cumsum(d)])


def _cr_eval(P: np.ndarray, t: np.ndarray, tt: np.ndarray) -> np.ndarray:
    """Barry-Goldman evaluation of one centripetal segment between P[1], P[2]."""
    t0, t1, t2, t3 = t
    tt = tt[:, None]
    A1 = (t1 - tt) / (t1 - t0) * P[0] + (tt - t0) / (t1 - t0) * P[1]
    A2 = (t2 - tt) / (t2 - t1) * P[1] + (tt - t1) / (t2 - t1) * P[2]
    A3 = (t3 - tt) / (t3 - t2) * P[2] + (tt - t2) / (t3 - t2) * P[3]
    B1 = (t2 - tt) / (t2 - t0) * A1 + (tt - t0) / (t2 - t0) * A2
    B2 = (t3 - tt) / (t3 - t1) * A2 + (tt - t1) / (t3 - t1) * A3
    return (t2 - tt) / (t2 - t1) * B1 + (tt - t1) / (t2 - t1) * B2


def interpolate(spec: RoadSpec, step: float = 2.0, lane_half_width: float = DEFAULT_MAP.lane_half_width,
                dense: int = 256) -> RoadGeometry:
    """Sample a centripetal Catmull-Rom spline through the control points.

    Each knot interval is resampled at uniform arclength so consecutive
    vertices are at most ``step`` apart; knots are kept exactly.
    """
    if not 0 < step <= 2.0:
        raise ValueError("step must lie in (0, 2]")
    pts = spec.as_array()
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(gaps <= MIN_KNOT_SPACING):
        i = int(np.argmax(gaps <= MIN_KNOT_SPACING))
        raise DegenerateRoadError(f"control points {i} and {i + 1} are {gaps[i]:.3f} m apart")

    # phantom end points by linear extension
    ext = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])
    tk = _knot_params(ext)

    out = [pts[:1]]
    knots = [0]
    for j in range(len(pts) - 1):
        P = ext[j:j + 4]
        t = tk[j:j + 4]
        tt = np.linspace(t[1], t[2], dense)
        curve = _cr_eval(P, t, tt)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(curve, axis=0), axis=1))])
        n = max(1, math.ceil(s[-1] / (0.999 * step)))
        targets = np.arange(1, n) * (s[-1] / n)
        seg = _cr_eval(P, t, np.interp(targets, s, tt)) if n > 1 else np.empty((0, 2))
        out.append(seg)
        out.append(pts[j + 1:j + 2])
        knots.append(knots[-1] + n)
    centerline = np.vstack(out)
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(centerline, axis=0), axis=1))])
    return RoadGeometry(centerline, float(lane_half_width), cum, tuple(knots))


def vertex_normals(centerline: np.ndarray) -> np.ndarray:
    """Unit left normals at each vertex, bisecting adjacent segment directions."""
    d = np.diff(centerline, axis=0)
    d /= np.linalg.norm(d, axis=1)[:, None]
    tangents = np.vstack([d[:1], d[:-1] + d[1:], d[-1:]])
    norm = np.linalg.norm(tangents, axis=1)
    # a full reversal has no bisector; fall back to the incoming direction
    bad = norm < 1e-12
    if np.any(bad):
        idx = np.nonzero(bad)[0]
        tangents[idx] = d[idx - 1]
        norm[idx] = 1.0
    tangents /= norm[:, None]
    return np.column_stack([-tangents[:, 1], tangents[:, 0]])


def lane_edges(geom: RoadGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Left and right lane boundaries."""
    n = vertex_normals(geom.centerline) * geom.lane_half_width
    return geom.centerline + n, geom.centerline - n


def segment_intersections(centerline: np.ndarray) -> tuple[int, int] | None:
    """First pair (i, j), j >= i + 2, of intersecting closed centerline segments."""
    a = centerline[:-1]
    b = centerline[1:]
    m = len(a)
    if m < 3:
        return None
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)

    def orient(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    A, B = a[:, None, :], b[:, None, :]
    C, D = a[None, :, :], b[None, :, :]
    overlap = np.all((lo[:, None, :] <= hi[None, :, :]) & (lo[None, :, :] <= hi[:, None, :]), axis=2)
    idx = np.arange(m)
    overlap &= idx[None, :] >= idx[:, None] + 2
    if not overlap.any():
        return None
    hit = (overlap
           & (orient(A, B, C) * orient(A, B, D) <= 0)
           & (orient(C, D, A) * orient(C, D, B) <= 0))
    if not hit.any():
        return None
    i, j = np.argwhere(hit)[0]
    return int(i), int(j)


def turn_radii(centerline: np.ndarray) -> np.ndarray:
    """Circumradius through each interior vertex and its neighbours (inf if straight)."""
    p0, p1, p2 = centerline[:-2], centerline[1:-1], centerline[2:]
    a = np.linalg.norm(p1 - p0, axis=1)
    b = np.linalg.norm(p2 - p1, axis=1)
    c = np.linalg.norm(p2 - p0, axis=1)
    cross = np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                   - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a * b * c / (2.0 * cross)
    return np.where(cross > 0, r, np.inf)


def validate(geom: RoadGeometry, map_spec: MapSpec = DEFAULT_MAP) -> ValidityResult:
    """Check bounds, then self-intersection, then sharpness; report the first failure."""
    left, right = lane_edges(geom)
    L = map_spec.side_length
    for name, edge in (("left", left), ("right", right)):
        outside = np.any((edge < 0.0) | (edge > L), axis=1)
        if outside.any():
            i = int(np.argmax(outside))
            x, y = edge[i]
            return ValidityResult(Validity.OUT_OF_BOUNDS, f"{name} edge vertex {i} at ({x:.3f}, {y:.3f})")

    pair = segment_intersections(geom.centerline)
    if pair is not None:
        return ValidityResult(Validity.SELF_INTERSECTING, f"segments {pair[0]} and {pair[1]}")

    radii = turn_radii(geom.centerline)
    sharp = radii < map_spec.min_turn_radius
    if sharp.any():
        i = int(np.argmax(sharp))
        return ValidityResult(Validity.TOO_SHARP, f"radius {radii[i]:.3f} m at vertex {i + 1}")
    return ValidityResult(Validity.VALID)


def build_road(v, map_spec: MapSpec = DEFAULT_MAP, step: float = 2.0
               ) -> tuple[RoadSpec, RoadGeometry | None, ValidityResult]:
    """Decode, interpolate and validate in one go."""
    spec = decode_test(v, map_spec)
    try:
        geom = interpolate(spec, step, map_spec.lane_half_width)
    except DegenerateRoadError as exc:
        return spec, None, ValidityResult(Validity.DEGENERATE_SPACING, str(exc))
    return spec, geom, validate(geom, map_spec)


def is_valid_test(v, map_spec: MapSpec = DEFAULT_MAP) -> bool:
    return build_road(v, map_spec)[2].valid
