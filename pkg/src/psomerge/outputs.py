"""Result files: the trajectory table, the metrics document and the speed
profiles of lane changers. Every write is atomic (temp file, then rename)."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import DzConfig, Lane
from .simulation import Event, EventKind, Frame, Metrics, Scenario, SimulationLog, compute_metrics

SCHEMA_VERSION = 1
TRAJECTORY_HEADER = ["t_s", "vehicle_id", "lane", "x_m", "v_mps", "v_kmh", "event"]
SPEED_HEADER = ["vehicle_id", "t_s", "x_m", "v_kmh"]


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _num(x: float) -> str:
    # repr round-trips floats exactly
    return repr(float(x))


def trajectory_csv(log: SimulationLog) -> str:
    events: dict[tuple[float, str], list[str]] = {}
    for e in log.events:
        events.setdefault((e.t, e.vehicle_id), []).append(e.kind.value)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for f in log.frames:
        tag = ";".join(events.get((f.t, f.vehicle_id), ()))
        w.writerow([_num(f.t), f.vehicle_id, f.lane.value, _num(f.x), _num(f.v), _num(f.v * 3.6), tag])
    return buf.getvalue()


def read_trajectory_csv(path) -> tuple[list[Frame], list[Event]]:
    """Frames and events back from a trajectory table."""
    frames, events = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            f = Frame(float(row["t_s"]), row["vehicle_id"], Lane(row["lane"]),
                      float(row["x_m"]), float(row["v_mps"]))
            frames.append(f)
            for tag in filter(None, row["event"].split(";")):
                events.append(Event(f.t, f.vehicle_id, EventKind(tag), f.x))
    return frames, events


def speeds_csv(log: SimulationLog) -> str:
    """Speed profile of every vehicle while on the dedicated lane, grouped by vehicle."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPEED_HEADER)
    rows = [f for f in log.frames if f.lane is Lane.DEDICATED]
    rows.sort(key=lambda f: (f.vehicle_id, f.t))
    for f in rows:
        w.writerow([f.vehicle_id, _num(f.t), _num(f.x), _num(f.v * 3.6)])
    return buf.getvalue()


def timing_stats(seconds: Iterable[float]) -> dict:
    s = np.asarray(list(seconds), dtype=float)
    if s.size == 0:
        return {"n_decisions": 0, "mean_s": None, "p95_s": None, "max_s": None}
    return {
        "n_decisions": int(s.size),
        "mean_s": float(s.mean()),
        "p95_s": float(np.percentile(s, 95)),
        "max_s": float(s.max()),
    }


def _clean(obj):
    # JSON has no NaN; undefined statistics become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def run_report(scenario: Scenario, log: SimulationLog, metrics: Metrics) -> dict:
    merges = [
        {"vehicle_id": vid, "t_merge_s": rec.get("merge_time_s"),
         "x_merge_m": rec.get("merge_position_m"), "v_merge_kmh": rec.get("merge_speed_kmh")}
        for vid, rec in sorted(metrics.per_vehicle.items())
        if rec.get("merge_time_s") is not None
    ]
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "planner": scenario.planner.value,
        "seed": scenario.seed,
        "metrics": metrics.to_dict(),
        "merges": merges,
        "timing": timing_stats(log.decision_seconds),
        "n_spacing_interventions": len(log.interventions),
        "n_frames": len(log.frames),
    })


def metrics_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


EMIT_CHOICES = ("trajectories", "metrics", "speeds", "all")


def emit_outputs(out_dir, scenario: Scenario, log: SimulationLog, metrics: Metrics,
                 emit: Iterable[str] = ("all",), suffix: Optional[str] = None,
                 written: Optional[list] = None) -> list[Path]:
    """Write the requested files for one run. Returns the paths written and
    appends them to ``written`` as it goes, so a caller can clean up."""
    emit = set(emit)
    unknown = emit - set(EMIT_CHOICES)
    if unknown:
        raise ValueError(f"unknown output kind(s): {', '.join(sorted(unknown))}")
    if "all" in emit:
        emit = {"trajectories", "metrics", "speeds"}
    tag = f"_{suffix}" if suffix else ""
    out_dir = Path(out_dir)
    written = [] if written is None else written
    start = len(written)
    if "trajectories" in emit:
        written.append(atomic_write_text(out_dir / f"trajectories{tag}.csv", trajectory_csv(log)))
    if "speeds" in emit:
        written.append(atomic_write_text(out_dir / f"speeds{tag}.csv", speeds_csv(log)))
    if "metrics" in emit:
        report = run_report(scenario, log, metrics)
        written.append(atomic_write_text(out_dir / f"metrics{tag}.json", metrics_json(report)))
    return written[start:]


def recompute_metrics(path, dz: DzConfig) -> Metrics:
    frames, events = read_trajectory_csv(path)
    return compute_metrics(frames, events, dz)
