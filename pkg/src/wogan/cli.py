"""Command line entry point: ``wogan {campaign run, compare, replay, report, validate-config}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, plots
from .archive import ArchiveError, ArchiveWriter, ledger_from_store, read_archive, write_manifest
from .config import ConfigError, load_config
from .core import CampaignConfig, CampaignError, run_campaign
from .metrics import PUBLISHED_REFERENCE, CampaignReport, build_reports, efficiency, failure_stats, summarize
from .road import interpolate
from .sim import PROFILES, evaluate_fitness, get_profile, simulate

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("wogan")


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


def _overrides(args) -> dict:
    ov = {"seed": args.seed, "execution_budget": args.budget, "profile": args.profile,
          "fitness": args.fitness}
    if args.pre_validate is not None:
        ov["pre_validate"] = args.pre_validate == "on"
    return ov


# -- reports -------------------------------------------------------------------

def write_reports(out: Path, reports: list[CampaignReport], extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with (out / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CampaignReport.CSV_FIELDS)
        for r in reports:
            w.writerow(r.csv_row())
    doc = {"runs": [dataclasses.asdict(r) for r in reports], "summary": summarize(reports),
           "published_reference": PUBLISHED_REFERENCE}
    doc.update(extra or {})
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _run_reports(runs, cfg: CampaignConfig):
    return build_reports([(rid, seed, store, None) for rid, seed, store in runs],
                         cfg.failure_threshold, cfg.map)


# -- campaign run --------------------------------------------------------------

def execute_run(cfg: CampaignConfig, out: Path, run_id: str = "run") -> tuple[int, str | None]:
    """One campaign streamed to ``out``. Returns (exit code, error message)."""
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    writer = ArchiveWriter(out, cfg)
    status, error, store, ledger = "ok", None, None, None
    try:
        store, ledger = run_campaign(cfg, on_record=writer.write)
    except CampaignError as exc:
        status, error, store, ledger = "failed", str(exc), exc.store, exc.ledger
    finally:
        writer.close()
    if ledger is None:
        store, _ = read_archive(out)
        ledger = ledger_from_store(store, cfg)
    write_manifest(out, cfg, ledger, started, _now(), status, error)
    if status != "ok":
        return EXIT_RUNTIME, error
    reports, grids = _run_reports([(run_id, cfg.seed, store)], cfg)
    write_reports(out, reports, {"ledger": dataclasses.asdict(ledger)})
    plots.save(plots.fitness_plot(store, cfg.failure_threshold), out / "plots" / "fitness.svg")
    plots.save(plots.coverage_heatmap(grids[0]), out / "plots" / "coverage.svg")
    return EXIT_OK, None


def cmd_campaign_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = Path(args.out)
    code, error = execute_run(cfg, out)
    if code:
        print(f"error: {error} (partial archive in {out})", file=sys.stderr)
        return code
    store, _ = read_archive(out)
    failed = sum(bool(r.failed) for r in store)
    print(f"{len(store)} tests, {sum(r.executed for r in store)} executed, {failed} failed -> {out}")
    return EXIT_OK


# -- compare -------------------------------------------------------------------

def _compare_job(job):
    cfg_dict, out = job
    cfg = CampaignConfig.from_dict(cfg_dict)
    return execute_run(cfg, Path(out), f"{cfg.method}-{cfg.seed}")


def cmd_compare(args) -> int:
    base = load_config(args.config, _overrides(args))
    if args.repetitions < 1:
        raise InputError("--repetitions must be at least 1")
    out = Path(args.out)
    jobs = []
    for method in args.methods:
        for k in range(args.repetitions):
            cfg = dataclasses.replace(base, method=method, seed=base.seed + k)
            jobs.append((method, cfg, out / method / f"seed_{cfg.seed}"))
    payload = [(cfg.to_dict(), str(d)) for _, cfg, d in jobs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_job, payload))
    else:
        results = []
        for p in payload:
            results.append(_compare_job(p))
            if results[-1][0]:
                break  # abort, keep what has been written
    failures = [(str(d), err) for (_, _, d), (code, err) in zip(jobs, results) if code]
    if failures:
        for d, err in failures:
            print(f"error: run {d} failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    runs = []
    for method, cfg, d in jobs:
        store, _ = read_archive(d)
        runs.append((method, cfg, store))
    reports, _ = build_reports([(f"{m}-{c.seed}", c.seed, s, None) for m, c, s in runs],
                               base.failure_threshold, base.map)
    methods = {}
    for method in args.methods:
        idx = [i for i, (m, _, _) in enumerate(runs) if m == method]
        stores = [runs[i][2] for i in idx]
        fs = failure_stats(stores, base.failure_threshold)
        effs = [efficiency(s) for s in stores]
        methods[method] = {
            "failed": {"mean": fs.mean, "sd": fs.sd, "counts": list(fs.counts), "single_sample": fs.single_sample},
            **{k: v for k, v in summarize([reports[i] for i in idx]).items() if k != "runs"},
            "gen_s_per_test_mean": float(np.mean([e[0] for e in effs])),
            "sim_s_per_test_mean": float(np.mean([e[1] for e in effs])),
        }
    write_reports(out, reports, {"methods": methods, "threshold": base.failure_threshold})
    plots.save(plots.bar_plot({m: (v["failed"]["mean"], v["failed"]["sd"]) for m, v in methods.items()},
                              "failed tests", "Failed tests per run (mean ± SD)"), out / "plots" / "failed.svg")
    plots.save(plots.bar_plot({m: (v["relative_coverage"]["mean"], v["relative_coverage"]["sd"])
                               for m, v in methods.items()},
                              "relative coverage", "Relative map coverage (mean ± SD)"),
               out / "plots" / "coverage.svg")
    for m, v in methods.items():
        flag = " (single sample)" if v["failed"]["single_sample"] else ""
        print(f"{m}: failed {v['failed']['mean']:.2f} ± {v['failed']['sd']:.2f}{flag}, "
              f"relative coverage {v['relative_coverage']['mean']:.3f}")
    return EXIT_OK


# -- replay --------------------------------------------------------------------

def cmd_replay(args) -> int:
    store, cfg = read_archive(args.archive)
    if not 0 <= args.index < len(store):
        raise InputError(f"no record {args.index} (archive has {len(store)})")
    rec = store.records[args.index]
    if not rec.executed:
        raise InputError(f"record {rec.index} was not simulated ({rec.validity.status.value})")
    driver = cfg.driver
    if args.profile is not None and args.profile != cfg.driver_profile:
        if not args.force:
            raise InputError(f"archive was run with profile {cfg.driver_profile!r}; "
                             f"replaying with {args.profile!r} changes the fitness (use --force)")
        driver = get_profile(args.profile)
    geom = interpolate(rec.road, 2.0, cfg.map.lane_half_width)
    trace = simulate(geom, driver)
    result = evaluate_fitness(trace, geom, cfg.fitness_kind, cfg.failure_threshold)
    base = Path(args.archive)
    out = Path(args.out) if args.out else (base if base.is_dir() else base.parent)
    path = out / "traces" / f"record_{rec.index}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.write_csv(path)
    if driver is cfg.driver and result.value != rec.fitness:
        print(f"error: replayed fitness {result.value!r} differs from archived {rec.fitness!r}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"record {rec.index}: fitness {result.value!r} ({trace.termination.value}), trace {path}")
    return EXIT_OK


# -- report --------------------------------------------------------------------

def cmd_report(args) -> int:
    loaded = [(Path(p), *read_archive(p)) for p in args.archives]
    for path, store, _ in loaded:
        if not len(store):
            raise InputError(f"{path}: archive has no records")
    first = loaded[0][2]
    for path, _, cfg in loaded[1:]:
        if cfg.failure_threshold != first.failure_threshold or cfg.map != first.map:
            raise InputError(f"{path}: threshold or map differs from {loaded[0][0]}")
    runs = [(str(p), cfg.seed, store, None) for p, store, cfg in loaded]
    reports, grids = build_reports(runs, first.failure_threshold, first.map)
    out = Path(args.out)
    write_reports(out, reports)
    for i, g in enumerate(grids):
        plots.save(plots.coverage_heatmap(g), out / "plots" / f"coverage_{i}.svg")
    for r in reports:
        print(f"{r.run_id}: {r.total_tests} tests, effectiveness {r.effectiveness:.3f}, "
              f"{r.failed_tests} failed, coverage {r.coverage:.3f}, relative {r.relative_coverage:.3f}")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    print(f"ok: config hash {cfg.config_hash()}, profile {cfg.driver_profile}, "
          f"budget {cfg.execution_budget}, seed {cfg.seed}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, help="root seed (overrides the config and WOGAN_SEED)")
    p.add_argument("--budget", type=int, help="execution budget")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--pre-validate", choices=("on", "off"))
    p.add_argument("--fitness", choices=("bolp", "edge"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wogan", description="Online WGAN test generation for a lane-keeping stand-in.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    camp = sub.add_parser("campaign", help="campaign commands")
    camp_sub = camp.add_subparsers(dest="action", required=True)
    run = camp_sub.add_parser("run", help="run one campaign")
    _common(run)
    run.add_argument("--out", default="runs/campaign")
    run.set_defaults(func=cmd_campaign_run)

    cmp_ = sub.add_parser("compare", help="repeat campaigns per method and compare")
    _common(cmp_)
    cmp_.add_argument("--methods", nargs="+", choices=("wogan", "random"), default=["wogan", "random"])
    cmp_.add_argument("--repetitions", type=int, default=10)
    cmp_.add_argument("--jobs", type=int, default=1)
    cmp_.add_argument("--out", default="runs/compare")
    cmp_.set_defaults(func=cmd_compare)

    rep = sub.add_parser("replay", help="re-simulate one archived record")
    rep.add_argument("archive")
    rep.add_argument("--index", type=int, required=True)
    rep.add_argument("--profile", choices=sorted(PROFILES))
    rep.add_argument("--force", action="store_true")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_replay)

    r = sub.add_parser("report", help="recompute metrics from archives")
    r.add_argument("archives", nargs="+")
    r.add_argument("--out", default="runs/report")
    r.set_defaults(func=cmd_report)

    vc = sub.add_parser("validate-config", help="check a config file")
    _common(vc)
    vc.set_defaults(func=cmd_validate_config)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_INPUT
    except (ArchiveError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CampaignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
