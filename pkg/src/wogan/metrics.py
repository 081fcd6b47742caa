"""Efficiency, effectiveness and failure-diversity metrics over archives."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

import numpy as np

from .road import DEFAULT_MAP, MapSpec, RoadGeometry, decode_test, interpolate
from .sim import classify_failure

# Published numbers, shown for context only; they come from a different simulator.
PUBLISHED_REFERENCE = {
    "note": "published competition results; not reproducible here",
    "beamng_ai_failed": {"WOGAN": (330.3, 55.8), "AMBIEGEN": (90.4, 12.0)},
    "dave2_failed": {"WOGAN": (3.1, 1.3), "AMBIEGEN": (15.3, 6.3), "FRENETICV": (11.1, 4.5)},
}


@dataclass
class CoverageGrid:
    cells_per_side: int
    side_length: float
    occupied: np.ndarray  # bool, indexed [row (y), column (x)]

    @classmethod
    def empty(cls, cells_per_side: int = DEFAULT_MAP.coverage_grid_cells,
              side_length: float = DEFAULT_MAP.side_length) -> CoverageGrid:
        return cls(cells_per_side, side_length, np.zeros((cells_per_side, cells_per_side), dtype=bool))

    @classmethod
    def for_map(cls, map_spec: MapSpec) -> CoverageGrid:
        return cls.empty(map_spec.coverage_grid_cells, map_spec.side_length)

    @property
    def cells(self) -> set[tuple[int, int]]:
        rows, cols = np.nonzero(self.occupied)
        return {(int(c), int(r)) for r, c in zip(rows, cols)}

    @property
    def fraction(self) -> float:
        return float(self.occupied.sum()) / self.occupied.size

    def same_shape(self, other: CoverageGrid) -> bool:
        return self.cells_per_side == other.cells_per_side and self.side_length == other.side_length


def cell_indices(points: np.ndarray, cells_per_side: int, side_length: float) -> np.ndarray:
    """(col, row) cell of each point inside the map; points on the far edge go to the last cell."""
    pts = np.asarray(points, dtype=float)
    inside = np.all((pts >= 0.0) & (pts <= side_length), axis=1)
    idx = np.floor(pts[inside] / (side_length / cells_per_side)).astype(int)
    return np.minimum(idx, cells_per_side - 1)


def polyline_cells(line: np.ndarray, cells_per_side: int, side_length: float) -> np.ndarray:
    """(col, row) of every cell the polyline passes through.

    Each segment is split where it crosses a grid line and the cell of
    every piece's midpoint is taken, so corner clips between vertices are
    not lost.
    """
    size = side_length / cells_per_side
    pts = [np.asarray(line, dtype=float)]
    for a, b in zip(line[:-1], line[1:]):
        ts = []
        for axis in (0, 1):
            lo, hi = sorted((a[axis], b[axis]))
            if hi - lo <= 0:
                continue
            ks = np.arange(math.ceil(lo / size), math.floor(hi / size) + 1) * size
            ts.append((ks - a[axis]) / (b[axis] - a[axis]))
        if not ts:
            continue
        t = np.unique(np.concatenate([[0.0, 1.0], *ts]))
        mids = (t[:-1] + t[1:]) / 2
        pts.append(a + mids[:, None] * (b - a))
    return np.unique(cell_indices(np.vstack(pts), cells_per_side, side_length), axis=0)


def rasterize(failing_geoms, grid: CoverageGrid) -> CoverageGrid:
    """New grid with every cell touched by a failing road's centerline marked."""
    occ = grid.occupied.copy()
    for g in failing_geoms:
        idx = polyline_cells(g.centerline, grid.cells_per_side, grid.side_length)
        if len(idx):
            occ[idx[:, 1], idx[:, 0]] = True
    return CoverageGrid(grid.cells_per_side, grid.side_length, occ)


def map_coverage(failing_geoms, grid: CoverageGrid) -> float:
    return rasterize(failing_geoms, grid).fraction


def relative_coverage(run: CoverageGrid, cohort) -> float:
    """Cells covered by ``run`` over the cells covered by ``run`` and the cohort together."""
    union = run.occupied.copy()
    for other in cohort:
        if not run.same_shape(other):
            raise ValueError("coverage grids differ in shape")
        union |= other.occupied
    n_union = int(union.sum())
    if n_union == 0:
        # nothing covered anywhere, including by the run itself
        return 0.0
    return float(run.occupied.sum()) / n_union


def effectiveness(store) -> float:
    """Valid tests over all recorded tests."""
    records = list(store)
    if not records:
        raise ValueError("store is empty")
    return sum(r.validity.valid for r in records) / len(records)


def efficiency(store, ledger=None) -> tuple[float, float]:
    """Mean generation seconds per recorded test and simulation seconds per executed test."""
    records = list(store)
    if not records:
        raise ValueError("store is empty")
    if ledger is not None:
        gen, sim = ledger.generation_seconds, ledger.simulation_seconds
    else:
        gen = sum(r.generation_time for r in records)
        sim = sum(r.simulation_time for r in records)
    executed = sum(r.executed for r in records)
    return gen / len(records), (sim / executed if executed else 0.0)


def failed_count(store, threshold: float) -> int:
    return sum(classify_failure(r.fitness, threshold) for r in store if r.executed)


@dataclass(frozen=True)
class FailureStats:
    mean: float
    sd: float
    counts: tuple[int, ...]
    single_sample: bool


def failure_stats(stores, threshold: float) -> FailureStats:
    """Sample mean and n-1 standard deviation of per-run failure counts."""
    counts = tuple(failed_count(s, threshold) for s in stores)
    if not counts:
        raise ValueError("need at least one store")
    if len(counts) == 1:
        return FailureStats(float(counts[0]), 0.0, counts, True)
    return FailureStats(statistics.fmean(counts), statistics.stdev(counts), counts, False)


def failing_geometries(store, threshold: float, map_spec: MapSpec = DEFAULT_MAP) -> list[RoadGeometry]:
    return [interpolate(decode_test(np.array(r.test), map_spec), 2.0, map_spec.lane_half_width)
            for r in store if r.executed and classify_failure(r.fitness, threshold)]


def store_coverage(store, threshold: float, map_spec: MapSpec = DEFAULT_MAP) -> CoverageGrid:
    return rasterize(failing_geometries(store, threshold, map_spec), CoverageGrid.for_map(map_spec))


@dataclass
class CampaignReport:
    run_id: str
    seed: int
    total_tests: int
    valid_tests: int
    effectiveness: float
    failed_tests: int
    mean_generation_seconds_per_test: float
    mean_simulation_seconds_per_test: float
    coverage: float
    relative_coverage: float

    CSV_FIELDS = ("run_id", "seed", "total", "valid", "effectiveness", "failed", "coverage",
                  "relative_coverage", "gen_s_per_test", "sim_s_per_test")

    def csv_row(self) -> list:
        return [self.run_id, self.seed, self.total_tests, self.valid_tests, self.effectiveness,
                self.failed_tests, self.coverage, self.relative_coverage,
                self.mean_generation_seconds_per_test, self.mean_simulation_seconds_per_test]


def build_reports(runs, threshold: float, map_spec: MapSpec = DEFAULT_MAP) -> tuple[list[CampaignReport], list[CoverageGrid]]:
    """Reports for ``runs`` = [(run_id, seed, store, ledger_or_None)], relative to their union."""
    grids = [store_coverage(store, threshold, map_spec) for _, _, store, _ in runs]
    reports = []
    for i, (run_id, seed, store, ledger) in enumerate(runs):
        gen, sim = efficiency(store, ledger)
        others = grids[:i] + grids[i + 1:]
        reports.append(CampaignReport(
            run_id=run_id, seed=seed, total_tests=len(store),
            valid_tests=sum(r.validity.valid for r in store),
            effectiveness=effectiveness(store),
            failed_tests=failed_count(store, threshold),
            mean_generation_seconds_per_test=gen, mean_simulation_seconds_per_test=sim,
            coverage=grids[i].fraction,
            relative_coverage=relative_coverage(grids[i], others),
        ))
    return reports, grids


def summarize(reports: list[CampaignReport]) -> dict:
    """Cohort mean and sample SD of every numeric report field."""
    out = {"runs": len(reports), "single_sample": len(reports) < 2}
    for name in ("total_tests", "valid_tests", "effectiveness", "failed_tests", "coverage",
                 "relative_coverage", "mean_generation_seconds_per_test", "mean_simulation_seconds_per_test"):
        vals = [float(getattr(r, name)) for r in reports]
        out[name] = {
            "mean": statistics.fmean(vals) if vals else math.nan,
            "sd": statistics.stdev(vals) if len(vals) > 1 else 0.0,
        }
    return out
