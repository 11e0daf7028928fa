"""Command-line entry point: single runs, PSO-vs-GA comparisons and seed batches."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .core import InvalidInputError
from .outputs import (
    EMIT_CHOICES, SCHEMA_VERSION, atomic_write_text, emit_outputs, metrics_json, run_report,
    timing_stats,
)
from .scenario_file import ScenarioFile, load_scenario_file
from .simulation import PlannerKind, SimulationError, run

log = logging.getLogger("psomerge")

BATCH_FIELDS = ("mean_merge_position_m", "mean_merge_time_s", "avg_dz_speed_kmh",
                "avg_hdv_speed_kmh", "n_merged", "n_detoured")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="psomerge",
        description="Simulate lane changes out of a dedicated CAV lane with the PSO planner "
                    "or the gap-acceptance baseline.",
    )
    p.add_argument("--scenario", required=True, metavar="PATH", help="TOML scenario file")
    p.add_argument("--planner", choices=[k.value for k in PlannerKind],
                   help="planner for a single run (default: the file's, else pso)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--compare", action="store_true", help="run both planners on the same scenario")
    mode.add_argument("--batch", type=int, metavar="N", help="compare both planners over N consecutive seeds")
    p.add_argument("--seed", type=int, metavar="S", help="generation seed (batch: first seed)")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: ./out)")
    p.add_argument("--emit", action="append", choices=EMIT_CHOICES,
                   help="files to write; repeatable (default: all; batch: summary only)")
    p.add_argument("--jobs", type=int, default=1, metavar="J", help="parallel workers for --batch")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fmt(x, unit="", nd=2) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{x:.{nd}f}{unit}"


def _summary_line(report: dict) -> str:
    m = report["metrics"]
    t = report["timing"]
    return (
        f"{report['planner']:>3} seed={report['seed']}: merged {m['n_merged']}, detoured {m['n_detoured']}, "
        f"mean merge x={_fmt(m['mean_merge_position_m'], ' m', 1)} t={_fmt(m['mean_merge_time_s'], ' s')}, "
        f"DZ speed {_fmt(m['avg_dz_speed_kmh'], ' km/h', 1)}, "
        f"decision mean={_fmt(t['mean_s'] and t['mean_s'] * 1e3, ' ms', 3)}"
    )


def _run_one(sf: ScenarioFile, seed: Optional[int], planner, out: Path, emit, suffix, written):
    sc = sf.build(seed=seed, planner=planner)
    slog, metrics = run(sc)
    if emit:
        emit_outputs(out, sc, slog, metrics, emit, suffix=suffix, written=written)
    return run_report(sc, slog, metrics)


def _better(pso: dict, ga: dict) -> dict:
    def lt(a, b):
        return a is not None and b is not None and a < b
    p, g = pso["metrics"], ga["metrics"]
    return {
        "merge_position": lt(p["mean_merge_position_m"], g["mean_merge_position_m"]),
        "merge_time": lt(p["mean_merge_time_s"], g["mean_merge_time_s"]),
        "dz_speed": lt(g["avg_dz_speed_kmh"], p["avg_dz_speed_kmh"]),
    }


def _compare(sf, seed, out, emit, written) -> dict:
    reports = {k.value: _run_one(sf, seed, k, out, emit, k.value, written) for k in PlannerKind}
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": reports["pso"]["seed"],
        "pso": reports["pso"],
        "ga": reports["ga"],
        "pso_better": _better(reports["pso"], reports["ga"]),
    }


def _batch_worker(args):
    # failures come back as values so the parent can clean up every worker's files
    sf, seed, out, emit = args
    written: list = []
    try:
        cmp = _compare(sf, seed, out / f"seed_{seed}", emit, written)
    except (InvalidInputError, SimulationError, OSError, ValueError) as e:
        _remove(written)
        return None, [], f"seed {seed}: {e}"
    return cmp, [str(p) for p in written], None


def _batch(sf: ScenarioFile, first: int, n: int, out: Path, emit, jobs: int, written: list) -> dict:
    tasks = [(sf, s, out, emit) for s in range(first, first + n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_batch_worker, tasks))
    else:
        results = [_batch_worker(t) for t in tasks]
    rows = []
    errors = []
    for cmp, paths, err in results:
        written.extend(Path(p) for p in paths)
        if err:
            errors.append(err)
        else:
            rows.append(cmp)
    if errors:
        raise SimulationError("; ".join(errors))

    buf = io.StringIO()
    cols = ["seed"] + [f"{k}_{f}" for k in ("pso", "ga") for f in BATCH_FIELDS]
    cols += ["pso_better_position", "pso_better_time", "pso_better_speed"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for cmp in rows:
        vals = [cmp["seed"]]
        for k in ("pso", "ga"):
            vals += ["" if cmp[k]["metrics"][f] is None else repr(cmp[k]["metrics"][f]) for f in BATCH_FIELDS]
        b = cmp["pso_better"]
        vals += [int(b["merge_position"]), int(b["merge_time"]), int(b["dz_speed"])]
        w.writerow(vals)
    written.append(atomic_write_text(out / "batch_summary.csv", buf.getvalue()))

    frac = {key: sum(r["pso_better"][key] for r in rows) / len(rows) for key in ("merge_position", "merge_time", "dz_speed")}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "seeds": [r["seed"] for r in rows],
        "pso_better_fraction": frac,
        "decision_timing_pso": _pooled_timing(rows),
    }
    written.append(atomic_write_text(out / "batch_summary.json", metrics_json(summary)))
    return summary


def _pooled_timing(rows) -> dict:
    # per-run stats only; pooled mean weighted by decision count
    n = sum(r["pso"]["timing"]["n_decisions"] for r in rows)
    if n == 0:
        return timing_stats([])
    mean = math.fsum(r["pso"]["timing"]["mean_s"] * r["pso"]["timing"]["n_decisions"]
                     for r in rows if r["pso"]["timing"]["n_decisions"]) / n
    return {
        "n_decisions": n,
        "mean_s": mean,
        "max_run_p95_s": max(r["pso"]["timing"]["p95_s"] or 0.0 for r in rows),
        "max_s": max(r["pso"]["timing"]["max_s"] or 0.0 for r in rows),
    }


def _remove(paths) -> None:
    for p in paths:
        try:
            Path(p).unlink()
        except FileNotFoundError:
            pass


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.batch is not None and args.batch < 1:
        parser.error("--batch N needs N >= 1")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be >= 0")

    out = Path(args.out)
    written: list = []
    try:
        sf = load_scenario_file(args.scenario)
        if args.batch is not None:
            if not sf.generated:
                raise InvalidInputError("--batch needs a [generation] section; this file lists its vehicles")
            emit = tuple(args.emit) if args.emit else ()
            first = sf.seed if args.seed is None else args.seed
            summary = _batch(sf, first, args.batch, out, emit, args.jobs, written)
            frac = summary["pso_better_fraction"]
            print(f"batch of {args.batch} seeds from {first}: PSO better on merge position in "
                  f"{frac['merge_position']:.0%}, merge time {frac['merge_time']:.0%}, "
                  f"DZ speed {frac['dz_speed']:.0%} of seeds")
        elif args.compare:
            emit = tuple(args.emit or ("all",))
            cmp = _compare(sf, args.seed, out, emit, written)
            written.append(atomic_write_text(out / "comparison.json", metrics_json(cmp)))
            print(_summary_line(cmp["pso"]))
            print(_summary_line(cmp["ga"]))
        else:
            emit = tuple(args.emit or ("all",))
            planner = args.planner or sf.base.planner
            report = _run_one(sf, args.seed, planner, out, emit, PlannerKind(planner).value, written)
            print(_summary_line(report))
    except (InvalidInputError, SimulationError, OSError, ValueError) as e:
        _remove(written)
        print(f"psomerge: error: {e}", file=sys.stderr)
        return 1
    except BaseException:
        _remove(written)
        raise
    for p in written:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
