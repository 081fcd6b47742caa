"""The online generate-rank-execute loop.

A campaign spends a fixed number of simulator executions. The first share
goes to uniform random search; after that every iteration retrains the
analyzer on all executed tests, retrains the WGAN on the high-fitness
subset, samples a candidate pool from the generator and executes the
candidate the analyzer scores highest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .road import DEFAULT_MAP, TEST_DIM, MapSpec, RoadSpec, ValidityResult, build_road, is_valid_test
from .sim import PROFILES, DriverConfig, evaluate_fitness, simulate

log = logging.getLogger(__name__)

MAX_INVALID_DRAWS = 10_000
MAX_PROPOSAL_BATCHES = 100


class CampaignError(RuntimeError):
    """A campaign could not continue; the partial results ride along."""

    def __init__(self, message, store=None, ledger=None):
        super().__init__(message)
        self.store = store
        self.ledger = ledger


class BudgetExhaustedError(CampaignError):
    pass


def derive_seed(root: int, label: str) -> int:
    """Per-component seed from the root seed by labeled hashing."""
    digest = hashlib.sha256(f"{int(root)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class CampaignConfig:
    execution_budget: int = 200
    init_fraction: float = 0.2
    candidate_pool: int = 32
    pre_validate: bool = False
    fitness_kind: str = "bolp"
    failure_threshold: float = 0.85
    seed: int = 0
    quantile_start: float = 0.5
    quantile_end: float = 0.95
    method: str = "wogan"
    cold_start: bool = False
    max_invalid_streak: int = 1000
    learn_invalid: bool = True
    wall_clock_cap: float = 0.0
    driver: DriverConfig = PROFILES["competent"]
    gan: neural.GanTrainConfig = neural.GanTrainConfig()
    analyzer: neural.AnalyzerTrainConfig = neural.AnalyzerTrainConfig()
    map: MapSpec = DEFAULT_MAP

    def __post_init__(self):
        if self.execution_budget < 1:
            raise ValueError("execution_budget must be at least 1")
        if not 0 < self.init_fraction < 1:
            raise ValueError("init_fraction must lie in (0, 1)")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be at least 1")
        if self.fitness_kind not in ("bolp", "edge"):
            raise ValueError("fitness_kind must be 'bolp' or 'edge'")
        if not 0 <= self.failure_threshold <= 1:
            raise ValueError("failure_threshold must lie in [0, 1]")
        if not (0 <= self.quantile_start <= 1 and 0 <= self.quantile_end <= 1):
            raise ValueError("quantiles must lie in [0, 1]")
        if self.method not in ("wogan", "random"):
            raise ValueError("method must be 'wogan' or 'random'")
        if self.max_invalid_streak < 1:
            raise ValueError("max_invalid_streak must be at least 1")

    @property
    def driver_profile(self) -> str:
        return self.driver.profile_name

    @property
    def init_executions(self) -> int:
        """Executions spent on random search (all of them for the random baseline)."""
        if self.method == "random":
            return self.execution_budget
        # the epsilon absorbs products like 0.2 * 15 = 3.0000000000000004
        return min(self.execution_budget, math.ceil(self.init_fraction * self.execution_budget - 1e-9))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> CampaignConfig:
        d = dict(d)
        d["driver"] = DriverConfig(**d["driver"])
        d["gan"] = neural.GanTrainConfig(**d["gan"])
        d["analyzer"] = neural.AnalyzerTrainConfig(**d["analyzer"])
        m = dict(d["map"])
        m["start_anchor"] = tuple(m["start_anchor"])
        d["map"] = MapSpec(**m)
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TestRecord:
    index: int
    phase: str
    test: tuple[float, ...]
    road: RoadSpec
    validity: ValidityResult
    fitness: float | None
    failed: bool | None
    generation_time: float = 0.0
    simulation_time: float = 0.0

    @property
    def executed(self) -> bool:
        return self.fitness is not None

    def same_outcome(self, other: TestRecord) -> bool:
        """Equality ignoring wall-clock fields."""
        return (self.index, self.phase, self.test, self.road, self.validity, self.fitness, self.failed) == (
            other.index, other.phase, other.test, other.road, other.validity, other.fitness, other.failed)


@dataclass
class TrainingStore:
    records: list[TestRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def add(self, phase, test, road, validity, fitness=None, failed=None,
            generation_time=0.0, simulation_time=0.0) -> TestRecord:
        if (fitness is not None) != validity.valid:
            raise ValueError("fitness must be present exactly for valid tests")
        rec = TestRecord(len(self.records), phase, tuple(float(c) for c in test), road, validity,
                         None if fitness is None else float(fitness), failed,
                         generation_time, simulation_time)
        self.records.append(rec)
        return rec

    def executed(self) -> list[TestRecord]:
        return [r for r in self.records if r.executed]

    def executed_tests(self) -> np.ndarray:
        ex = self.executed()
        return np.array([r.test for r in ex], dtype=float).reshape(len(ex), TEST_DIM)

    def executed_fitness(self) -> np.ndarray:
        return np.array([r.fitness for r in self.executed()], dtype=float)


@dataclass
class BudgetLedger:
    execution_budget: int
    executions_used: int = 0
    generation_seconds: float = 0.0
    simulation_seconds: float = 0.0
    wall_seconds: float = 0.0
    stopped_early: bool = False

    @property
    def exhausted(self) -> bool:
        return self.executions_used >= self.execution_budget


class _Clock:
    """Books consecutive wall-clock intervals; nothing is counted twice."""

    def __init__(self):
        self.start = self._last = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        dt, self._last = now - self._last, now
        return dt


def select_training_subset(store: TrainingStore, progress: float, cfg: CampaignConfig) -> np.ndarray:
    """Executed tests whose fitness reaches the scheduled quantile.

    The quantile moves linearly from ``quantile_start`` to
    ``quantile_end`` as ``progress`` goes from 0 to 1 and is computed with
    linear interpolation between order statistics. The best test is
    returned alone if nothing else qualifies.
    """
    tests = store.executed_tests()
    fit = store.executed_fitness()
    if len(fit) == 0:
        raise ValueError("no executed tests to select from")
    p = min(1.0, max(0.0, progress))
    q = cfg.quantile_start + (cfg.quantile_end - cfg.quantile_start) * p
    threshold = np.quantile(fit, q, method="linear")
    keep = fit >= threshold
    if not keep.any():
        keep[int(np.argmax(fit))] = True
    return tests[keep]


def propose_candidate(G: neural.DenseNet, A: neural.DenseNet, cfg: CampaignConfig,
                      noise_source: np.random.Generator, validator=None) -> tuple[np.ndarray, float]:
    """Sample ``candidate_pool`` tests and return the one ``A`` rates highest.

    With a validator, invalid samples are dropped and whole pools are
    resampled until something survives. Ties go to the earliest sample.
    """
    samples = neural.sample_generator(G, cfg.candidate_pool, noise_source)
    if validator is not None:
        for _ in range(MAX_PROPOSAL_BATCHES):
            mask = np.array([validator(v) for v in samples])
            if mask.any():
                samples = samples[mask]
                break
            samples = neural.sample_generator(G, cfg.candidate_pool, noise_source)
        else:
            raise CampaignError(f"no valid candidate in {MAX_PROPOSAL_BATCHES} pools")
    pred = neural.forward(A, samples)[:, 0]
    best = int(np.argmax(pred))
    return samples[best], float(pred[best])


class Campaign:
    """Mutable state of one run: models, store, ledger and random streams."""

    def __init__(self, cfg: CampaignConfig, on_record=None):
        self._clock = _Clock()
        self.on_record = on_record
        self.cfg = cfg
        self.store = TrainingStore()
        self.ledger = BudgetLedger(cfg.execution_budget)
        seed = cfg.seed
        self.rng_random = np.random.default_rng(derive_seed(seed, "random_search"))
        self.rng_init = np.random.default_rng(derive_seed(seed, "init"))
        self.rng_gan = np.random.default_rng(derive_seed(seed, "gan_noise"))
        self.rng_analyzer = np.random.default_rng(derive_seed(seed, "analyzer_shuffle"))
        self.rng_proposal = np.random.default_rng(derive_seed(seed, "proposal_noise"))
        self._init_models()
        self._pending_generation = 0.0
        self.invalid_streak = 0

    def _init_models(self):
        noise = self.cfg.gan.noise_dim
        self.G = neural.make_generator(self.rng_init, noise_dim=noise, out_dim=TEST_DIM)
        self.C = neural.make_critic(self.rng_init, in_dim=TEST_DIM)
        self.A = neural.make_analyzer(self.rng_init, in_dim=TEST_DIM)

    # -- bookkeeping -------------------------------------------------------

    def _book_generation(self):
        self._pending_generation += self._clock.lap()

    def _record(self, phase, test, road, validity, geom):
        """Simulate when valid, book timings, append the record."""
        self._book_generation()
        fitness = failed = None
        sim_time = 0.0
        if validity.valid:
            trace = simulate(geom, self.cfg.driver)
            result = evaluate_fitness(trace, geom, self.cfg.fitness_kind, self.cfg.failure_threshold)
            sim_time = self._clock.lap()
            fitness, failed = result.value, result.failed
        gen_time = self._pending_generation + self._clock.lap()
        self._pending_generation = 0.0
        rec = self.store.add(phase, test, road, validity, fitness, failed, gen_time, sim_time)
        self.ledger.generation_seconds += gen_time
        self.ledger.simulation_seconds += sim_time
        self.ledger.wall_seconds = self._clock._last - self._clock.start
        if rec.executed:
            self.ledger.executions_used += 1
        if self.on_record is not None:
            self.on_record(rec)
        return rec

    def _over_wall_clock(self) -> bool:
        cap = self.cfg.wall_clock_cap
        return cap > 0 and time.perf_counter() - self._clock.start > cap

    # -- phases ------------------------------------------------------------

    def random_search_phase(self) -> TrainingStore:
        if len(self.store):
            raise CampaignError("random search must start from an empty store", self.store, self.ledger)
        target = self.cfg.init_executions
        misses = 0
        while self.ledger.executions_used < target:
            if self._over_wall_clock():
                self.ledger.stopped_early = True
                break
            v = self.rng_random.uniform(-1.0, 1.0, TEST_DIM)
            road, geom, validity = build_road(v, self.cfg.map)
            if not validity.valid:
                misses += 1
                if misses >= MAX_INVALID_DRAWS:
                    raise CampaignError(f"{MAX_INVALID_DRAWS} consecutive invalid random tests",
                                        self.store, self.ledger)
                if self.cfg.pre_validate:
                    continue
            else:
                misses = 0
            self._record("random", v, road, validity, geom)
        return self.store

    @property
    def progress(self) -> float:
        n_init = self.cfg.init_executions
        span = self.cfg.execution_budget - n_init
        if span <= 0:
            return 1.0
        return (self.ledger.executions_used - n_init) / span

    def analyzer_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Analyzer targets: fitness of executed tests, plus 0 for invalid ones if enabled."""
        if not self.cfg.learn_invalid:
            return self.store.executed_tests(), self.store.executed_fitness()
        x = np.array([r.test for r in self.store], dtype=float).reshape(len(self.store), TEST_DIM)
        y = np.array([r.fitness if r.executed else 0.0 for r in self.store], dtype=float)
        return x, y

    def wogan_iteration(self) -> TestRecord:
        """Retrain, propose, execute; one cycle of the loop."""
        cfg = self.cfg
        if self.ledger.exhausted:
            raise BudgetExhaustedError("execution budget exhausted", self.store, self.ledger)
        if cfg.cold_start:
            self._init_models()
        x, y = self.analyzer_data()
        neural.analyzer_round(self.A, x, y, cfg.analyzer, self.rng_analyzer)
        subset = select_training_subset(self.store, self.progress, cfg)
        neural.wgan_round(self.G, self.C, subset, cfg.gan, self.rng_gan)
        validator = (lambda v: is_valid_test(v, cfg.map)) if cfg.pre_validate else None
        test, predicted = propose_candidate(self.G, self.A, cfg, self.rng_proposal, validator)
        road, geom, validity = build_road(test, cfg.map)
        rec = self._record("wogan", test, road, validity, geom)
        log.debug("iteration %d: predicted %.3f, %s, fitness %s", rec.index, predicted,
                  validity.status.value, rec.fitness)
        if rec.executed:
            self.invalid_streak = 0
        else:
            self.invalid_streak += 1
            if self.invalid_streak >= cfg.max_invalid_streak:
                raise CampaignError(f"{self.invalid_streak} consecutive invalid proposals",
                                    self.store, self.ledger)
        return rec

    def run(self) -> tuple[TrainingStore, BudgetLedger]:
        try:
            self.random_search_phase()
            while not self.ledger.exhausted and not self.ledger.stopped_early:
                if self._over_wall_clock():
                    self.ledger.stopped_early = True
                    break
                self.wogan_iteration()
        except CampaignError:
            raise
        except Exception as exc:
            raise CampaignError(f"campaign failed: {exc}", self.store, self.ledger) from exc
        return self.store, self.ledger


def run_campaign(cfg: CampaignConfig, on_record=None) -> tuple[TrainingStore, BudgetLedger]:
    """Random search, then WOGAN iterations until the execution budget is spent.

    ``on_record`` is called with every new record, e.g. to stream it to disk.
    On failure a CampaignError carries the partial store and ledger.
    """
    return Campaign(cfg, on_record).run()
