"""Command-line entry point: ``crowdwatch run | validate | replay | coverage``.

Exit codes: 0 ok, 1 runtime error (or a failed coverage check), 2 unreadable or invalid scenario.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .runner import coverage_report, emit_trajectories, read_log, run_scenario, summarize, write_log
from .scenario import ScenarioError, bundled, load_scenario

log = logging.getLogger("crowdwatch")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def resolve(name: str) -> Path:
    """A path on disk, or the name of a bundled scenario (``table1_case1``)."""
    p = Path(name)
    if p.exists():
        return p
    b = bundled(name)
    return b if b.exists() else p


def _run_one(path: Path, seed, duration, out: Path) -> dict:
    report = run_scenario(path, seed=seed, duration=duration)
    out.mkdir(parents=True, exist_ok=True)
    write_log(report, out / "events.ndjson")
    (out / "summary.json").write_text(report.summary_text())
    emit_trajectories(report, out / "trajectories.csv")
    return report.summary


def cmd_run(args) -> int:
    paths = [resolve(s) for s in args.scenario]
    # validate everything up front so a typo in the fifth file does not waste the first four runs
    for p in paths:
        load_scenario(p).with_overrides(args.seed, args.duration)
    base = Path(args.out)
    outs = [base if len(paths) == 1 else base / p.stem for p in paths]
    if args.batch and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = [pool.submit(_run_one, p, args.seed, args.duration, o) for p, o in zip(paths, outs)]
            summaries = [f.result() for f in futs]
    else:
        summaries = [_run_one(p, args.seed, args.duration, o) for p, o in zip(paths, outs)]
    for p, o, s in zip(paths, outs, summaries):
        counts = {k: v["breaches"] for k, v in s["configurations"].items()}
        print(f"{p.stem}: breaches {json.dumps(counts, sort_keys=True)} "
              f"min_clearance {s['safety']['min_clearance']} -> {o}")
    return EXIT_OK


def cmd_validate(args) -> int:
    for name in args.scenario:
        sc = load_scenario(resolve(name))
        print(f"{name}: ok ({len(sc.trials)} trials x {len(sc.configurations)} configurations, "
              f"{sc.duration:g} s at dt {sc.dt:g})")
    return EXIT_OK


def cmd_replay(args) -> int:
    summary = summarize(read_log(args.log))
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.check:
        saved = json.loads(Path(args.check).read_text())
        if saved != json.loads(text):
            print("replayed summary differs from", args.check, file=sys.stderr)
            return EXIT_RUNTIME
    print(text)
    return EXIT_OK


def cmd_coverage(args) -> int:
    rep = coverage_report(load_scenario(resolve(args.scenario)), args.cell)
    print(json.dumps(rep, sort_keys=True))
    return EXIT_OK if rep["ok"] else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crowdwatch", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenarios and write events, summary and trajectories")
    r.add_argument("scenario", nargs="+")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float)
    r.add_argument("--out", default="out")
    r.add_argument("--batch", action="store_true", help="run several scenarios in parallel processes")
    r.add_argument("--jobs", type=int, default=None)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="parse and validate without running")
    v.add_argument("scenario", nargs="+")
    v.set_defaults(func=cmd_validate)

    p = sub.add_parser("replay", help="recompute the summary from an event log")
    p.add_argument("log")
    p.add_argument("--check", metavar="SUMMARY", help="compare against a saved summary.json")
    p.set_defaults(func=cmd_replay)

    c = sub.add_parser("coverage", help="lawnmower coverage check only")
    c.add_argument("scenario")
    c.add_argument("--cell", type=float, default=0.25)
    c.set_defaults(func=cmd_coverage)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - the exit code is the contract
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
