"""Command-line entry point: ``minuet {run,synth,report,validate}``.

Exit codes: 0 success, 2 invalid configuration / schema violation,
3 runtime data error. Diagnostics go to stderr; on success ``run`` prints
only the manifest path. Set ``MINUET_VERBOSE=1`` for progress logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import statistics
import sys
import time
from typing import List, Optional

from . import __version__
from .engine import EventLog, run_batch
from .errors import ConfigError, DataError, LogSchemaError, MinuetError, TraceError
from .metrics import compute_report
from .mobility import SynthParams, synth_trace, write_csv_trace
from .scenario import load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("minuet")

SUMMARY_KEYS = ("txd", "txr", "nc", "txcv", "co")


def _fail(code: int, msg: str) -> int:
    print(f"minuet: error: {msg}", file=sys.stderr)
    return code


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _seed_list(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _emit(outdir: str, log_: EventLog, dt: float) -> dict:
    os.makedirs(outdir, exist_ok=True)
    report = compute_report(log_, dt)
    paths = {
        "log": os.path.join(outdir, "eventlog.ndjson"),
        "report": os.path.join(outdir, "report.json"),
        "series": os.path.join(outdir, "series.csv"),
    }
    _write(paths["log"], log_.dumps())
    _write(paths["report"], report.to_json())
    _write(paths["series"], report.to_csv())
    return {"paths": paths, "summary": report.summary()}


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    try:
        base = load_scenario(args.scenario)
        if args.technique:
            base = dataclasses.replace(base, clustering_technique=args.technique)
        seeds = args.seeds or [args.seed if args.seed is not None else base.seed]
        scenarios = [dataclasses.replace(base, seed=s) for s in seeds]
        for sc in scenarios:
            sc.validate()
        # resolve the trace up front so a missing file is a config error
        base.load_trace()
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except TraceError as exc:
        return _fail(EXIT_CONFIG, f"trace: {exc}")
    if not args.dt > 0:
        return _fail(EXIT_CONFIG, "--dt must be > 0")

    out = args.out
    os.makedirs(out, exist_ok=True)
    log.info("running %d scenario(s) from %s", len(scenarios), args.scenario)
    outcomes = run_batch(scenarios, parallelism=args.parallelism)
    failed = [o for o in outcomes if not o.ok]
    for o in failed:
        print(f"minuet: seed {seeds[o.index]}: {o.error}", file=sys.stderr)
    if failed and len(failed) == len(outcomes):
        return EXIT_DATA

    artifacts, runs = [], []
    for o in outcomes:
        if not o.ok:
            runs.append({"seed": seeds[o.index], "error": o.error})
            continue
        sub = out if len(seeds) == 1 else os.path.join(out, f"seed_{seeds[o.index]}")
        res = _emit(sub, o.log, args.dt)
        artifacts.extend(res["paths"].values())
        runs.append({"seed": seeds[o.index], **res})

    manifest = {
        "tool": "minuet",
        "version": __version__,
        "scenario": os.path.abspath(args.scenario),
        "technique": base.clustering_technique,
        "seeds": seeds,
        "dt": args.dt,
        "output_dir": os.path.abspath(out),
        "artifacts": artifacts,
        "runs": [{k: v for k, v in r.items() if k != "summary"} for r in runs],
    }
    ok_runs = [r for r in runs if "summary" in r]
    if len(seeds) > 1 and ok_runs:
        agg = {}
        for key in SUMMARY_KEYS + ("mp_gen", "mp_deliv"):
            vals = [r["summary"][key] if key in r["summary"] else r["summary"]["totals"][key]
                    for r in ok_runs]
            agg[key] = {"mean": statistics.fmean(vals), "min": min(vals), "max": max(vals)}
        agg_path = os.path.join(out, "batch_summary.json")
        _write(agg_path, json.dumps(agg, indent=2) + "\n")
        artifacts.append(agg_path)
    manifest_path = os.path.join(out, "manifest.json")
    artifacts.append(manifest_path)
    manifest["wall_clock_s"] = round(time.perf_counter() - t0, 3)
    _write(manifest_path, json.dumps(manifest, indent=2) + "\n")
    print(manifest_path)
    return EXIT_DATA if failed else EXIT_OK


def cmd_synth(args) -> int:
    try:
        params = SynthParams(
            n_vehicles=args.n, lanes=args.lanes, length_m=args.length,
            speed_range=(args.speed_min, args.speed_max), duration=args.duration, step=args.step,
        )
        params.validate()
    except ValueError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    text = write_csv_trace(synth_trace(params, args.seed))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write(args.out, text)
        print(args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.log, encoding="utf-8") as fh:
            log_ = EventLog.read(fh)
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot read {args.log}: {exc.strerror}")
    except LogSchemaError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if not args.dt > 0:
        return _fail(EXIT_CONFIG, "--dt must be > 0")
    report = compute_report(log_, args.dt)
    out = args.out or os.path.dirname(os.path.abspath(args.log))
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "report.json")
    _write(path, report.to_json())
    _write(os.path.join(out, "series.csv"), report.to_csv())
    print(path)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        trace = sc.load_trace()
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except TraceError as exc:
        return _fail(EXIT_CONFIG, f"trace: {exc}")
    log.info("%s: %d vehicles, %d events, %d base stations", args.scenario,
             len(trace.vehicle_ids), len(sc.events), len(sc.base_stations))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minuet", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"minuet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write log, report and series")
    r.add_argument("scenario")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", type=_seed_list, help="comma-separated seeds, run as a batch")
    r.add_argument("--out", default="out")
    r.add_argument("--technique", help="override clustering_technique")
    r.add_argument("--dt", type=float, default=1.0, help="metrics window (s)")
    r.add_argument("--parallelism", type=int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="generate a synthetic CSV trace")
    s.add_argument("--lanes", choices=("one-way", "two-way"), default="one-way")
    s.add_argument("--n", type=int, required=True, help="number of vehicles")
    s.add_argument("--length", type=float, default=1000.0, help="road length (m)")
    s.add_argument("--speed-min", type=float, default=8.0)
    s.add_argument("--speed-max", type=float, default=14.0)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    s.set_defaults(func=cmd_synth)

    rp = sub.add_parser("report", help="recompute metrics from an EventLog")
    rp.add_argument("log")
    rp.add_argument("--dt", type=float, default=1.0)
    rp.add_argument("--out", help="output directory (default: the log's directory)")
    rp.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check a scenario file and its trace")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO if os.environ.get("MINUET_VERBOSE") else logging.WARNING,
        format="%(name)s: %(message)s", stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        return _fail(EXIT_DATA, str(exc))
    except MinuetError as exc:
        return _fail(EXIT_DATA, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
