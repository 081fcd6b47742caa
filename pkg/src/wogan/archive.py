"""Line-delimited JSON archives of campaign records.

``archive.jsonl`` starts with a header line (format, version, config hash,
full config) followed by one record per line. Wall-clock timings are kept
in a sibling ``timings.jsonl`` so that replaying a seed reproduces the
archive byte for byte.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .core import BudgetLedger, CampaignConfig, TestRecord, TrainingStore
from .road import TEST_DIM, Validity, ValidityResult, decode_test

FORMAT = "wogan-archive"
VERSION = 1
ARCHIVE_NAME = "archive.jsonl"
TIMINGS_NAME = "timings.jsonl"
MANIFEST_NAME = "manifest.json"

_PHASES = ("random", "wogan")


class ArchiveError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(where + message)
        self.path = path
        self.line = line


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def header_dict(cfg: CampaignConfig) -> dict:
    return {"format": FORMAT, "version": VERSION, "config_hash": cfg.config_hash(), "config": cfg.to_dict()}


def record_dict(rec: TestRecord, cfg: CampaignConfig) -> dict:
    return {
        "index": rec.index,
        "phase": rec.phase,
        "test": list(rec.test),
        "road": rec.road.to_json(),
        "validity": rec.validity.status.value,
        "validity_detail": rec.validity.detail,
        "fitness": rec.fitness,
        "failed": rec.failed,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
    }


class ArchiveWriter:
    """Appends records as they are produced and flushes every line."""

    def __init__(self, directory, cfg: CampaignConfig):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self._arch = (self.dir / ARCHIVE_NAME).open("w", encoding="utf-8", newline="\n")
        self._tim = (self.dir / TIMINGS_NAME).open("w", encoding="utf-8", newline="\n")
        self._arch.write(_dumps(header_dict(cfg)) + "\n")
        self._arch.flush()
        self.written = 0

    def write(self, rec: TestRecord) -> None:
        self._arch.write(_dumps(record_dict(rec, self.cfg)) + "\n")
        self._tim.write(_dumps({"index": rec.index, "generation_time_s": rec.generation_time,
                                "simulation_time_s": rec.simulation_time}) + "\n")
        self._arch.flush()
        self._tim.flush()
        self.written += 1

    def write_all(self, store: TrainingStore) -> None:
        for rec in store.records[self.written:]:
            self.write(rec)

    def close(self) -> None:
        self._arch.close()
        self._tim.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_archive(directory, store: TrainingStore, cfg: CampaignConfig) -> Path:
    with ArchiveWriter(directory, cfg) as w:
        w.write_all(store)
    return Path(directory) / ARCHIVE_NAME


def _parse_record(obj, cfg: CampaignConfig, expected_index: int, path, line: int) -> TestRecord:
    def bad(msg):
        return ArchiveError(msg, path, line)

    if not isinstance(obj, dict):
        raise bad("record is not an object")
    missing = {"index", "phase", "test", "road", "validity", "fitness", "failed", "seed", "config_hash"} - obj.keys()
    if missing:
        raise bad(f"missing fields {sorted(missing)}")
    if obj["index"] != expected_index:
        raise bad(f"index {obj['index']!r} out of order, expected {expected_index}")
    if obj["phase"] not in _PHASES:
        raise bad(f"unknown phase {obj['phase']!r}")
    if obj["config_hash"] != cfg.config_hash():
        raise bad("config_hash differs from header")
    test = obj["test"]
    if not (isinstance(test, list) and len(test) == TEST_DIM and all(isinstance(c, (int, float)) for c in test)):
        raise bad(f"test must be a list of {TEST_DIM} numbers")
    try:
        validity = ValidityResult(Validity(obj["validity"]), obj.get("validity_detail", ""))
    except ValueError:
        raise bad(f"unknown validity {obj['validity']!r}") from None
    fitness, failed = obj["fitness"], obj["failed"]
    if (fitness is not None) != validity.valid:
        raise bad("fitness must be present exactly for valid records")
    if fitness is not None and not (isinstance(fitness, (int, float)) and 0.0 <= fitness <= 1.0):
        raise bad("fitness must be a number in [0, 1]")
    if (failed is None) != (fitness is None) or not (failed is None or isinstance(failed, bool)):
        raise bad("failed must be a boolean exactly when fitness is present")

    road = decode_test(np.array(test, dtype=float), cfg.map)
    stored = obj["road"]
    try:
        ok = len(stored) == len(road.points) and all(
            abs(sx - x) <= 1e-6 and abs(sy - y) <= 1e-6 for (sx, sy), (x, y) in zip(stored, road.points))
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise bad("road does not match the decoded test")
    return TestRecord(expected_index, obj["phase"], tuple(float(c) for c in test), road, validity,
                      None if fitness is None else float(fitness), failed)


def read_archive(path, timings: bool = True) -> tuple[TrainingStore, CampaignConfig]:
    """Parse an archive (file or run directory); attaches timings when available."""
    path = Path(path)
    if path.is_dir():
        path = path / ARCHIVE_NAME
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ArchiveError(f"cannot read archive: {exc.strerror}", path, 0) from None
    if not lines:
        raise ArchiveError("archive is empty", path, 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"malformed header: {exc.msg}", path, 1) from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise ArchiveError("not a campaign archive", path, 1)
    if header.get("version") != VERSION:
        raise ArchiveError(f"unsupported archive version {header.get('version')!r}", path, 1)
    try:
        cfg = CampaignConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"bad config in header: {exc}", path, 1) from None
    if cfg.config_hash() != header.get("config_hash"):
        raise ArchiveError("header config_hash does not match its config", path, 1)

    store = TrainingStore()
    for n, text in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"malformed record: {exc.msg}", path, n) from None
        store.records.append(_parse_record(obj, cfg, len(store.records), path, n))

    tpath = path.with_name(TIMINGS_NAME)
    if timings and tpath.exists():
        for n, text in enumerate(tpath.read_text(encoding="utf-8").splitlines(), start=1):
            try:
                t = json.loads(text)
                rec = store.records[t["index"]]
                rec.generation_time = float(t["generation_time_s"])
                rec.simulation_time = float(t["simulation_time_s"])
            except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError):
                raise ArchiveError("malformed timing record", tpath, n) from None
    return store, cfg


def ledger_from_store(store: TrainingStore, cfg: CampaignConfig) -> BudgetLedger:
    led = BudgetLedger(cfg.execution_budget)
    for r in store:
        led.generation_seconds += r.generation_time
        led.simulation_seconds += r.simulation_time
        led.executions_used += r.executed
    led.wall_seconds = led.generation_seconds + led.simulation_seconds
    return led


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(directory, cfg: CampaignConfig, ledger: BudgetLedger, started: _dt.datetime,
                   finished: _dt.datetime, status: str = "ok", error: str | None = None) -> Path:
    directory = Path(directory)
    manifest = {
        "tool": "wogan",
        "tool_version": __version__,
        "status": status,
        "error": error,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "ledger": {
            "execution_budget": ledger.execution_budget,
            "executions_used": ledger.executions_used,
            "generation_seconds": ledger.generation_seconds,
            "simulation_seconds": ledger.simulation_seconds,
            "wall_seconds": ledger.wall_seconds,
            "stopped_early": ledger.stopped_early,
        },
    }
    arch = directory / ARCHIVE_NAME
    if arch.exists():
        manifest["archive_sha256"] = file_sha256(arch)
    out = directory / MANIFEST_NAME
    out.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out
