"""Suite execution and artifact persistence.

Artifacts per run: results.csv (one row per check, shortest round-trip
number formatting so reruns diff cleanly), reports/<label>.json with the
full diagnostics, and manifest.json with the reproducibility metadata.
Per-check generators are derived from the master seed by the check's
position, so results are independent of worker count and execution order.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import CHECKS, RunConfig
from .report import FAIL, INCONCLUSIVE
from .rng import substream

__all__ = ["CSV_COLUMNS", "run_suite", "report_row"]

CSV_COLUMNS = ["check", "n", "k", "q", "p", "extra-params",
               "lhs", "lhs_stderr", "rhs", "rhs_stderr", "ratio", "verdict"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def report_row(label: str, report) -> dict:
    """CSV row for one check result."""
    params = dict(report.parameters)
    row = {"check": report.name}
    for key in ("n", "k", "q", "p"):
        row[key] = _fmt(params.pop(key)) if key in params else ""
    if label != report.name:
        params["label"] = label
    row["extra-params"] = json.dumps(params, sort_keys=True,
                                     separators=(",", ":"),
                                     default=_json_default)
    row["lhs"] = _fmt(report.lhs.value)
    row["lhs_stderr"] = _fmt(report.lhs.stderr)
    row["rhs"] = _fmt(report.rhs.value)
    row["rhs_stderr"] = _fmt(report.rhs.stderr)
    row["ratio"] = _fmt(report.ratio)
    row["verdict"] = report.verdict
    return row


def _safe_name(label: str) -> str:
    return re.sub(r"[^-._a-zA-Z0-9]+", "-", label)


def _execute(args):
    idx, job, densities, seed, substreams = args
    rng = substream(seed, idx)
    started = time.perf_counter()
    report = CHECKS[job.name].run(job.params, densities, rng, substreams,
                                  f"check {job.label}")
    return report, time.perf_counter() - started


def _exit_code(verdicts) -> int:
    if any(v == FAIL for v in verdicts):
        return 2
    if any(v == INCONCLUSIVE for v in verdicts):
        return 3
    return 0


def run_suite(config: RunConfig, jobs: int = 1, echo=print) -> int:
    """Run every configured check and persist the artifacts.

    Returns the exit status: 0 all pass, 2 any fail, 3 any inconclusive
    with no failures.  On KeyboardInterrupt the rows finished so far are
    already on disk and the manifest is written with interrupted = true.
    """
    out_dir = config.output_dir
    reports_dir = os.path.join(out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)

    tasks = [(idx, job, config.densities, config.seed, config.substreams)
             for idx, job in enumerate(config.checks)]

    manifest_checks = []
    verdicts = []
    interrupted = False
    total_started = time.perf_counter()
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        handle.flush()
        try:
            if jobs > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = pool.map(_execute, tasks)
                    _consume(results, config, writer, handle, reports_dir,
                             manifest_checks, verdicts, echo)
            else:
                _consume(map(_execute, tasks), config, writer, handle,
                         reports_dir, manifest_checks, verdicts, echo)
        except KeyboardInterrupt:
            interrupted = True
    total_wall = time.perf_counter() - total_started

    manifest = {
        "artifact_version": __version__,
        "config_hash": config.resolved_hash(),
        "seed": config.seed,
        "substreams": config.substreams,
        "interrupted": interrupted,
        "checks": manifest_checks,
        "totals": {
            "checks": len(manifest_checks),
            "pass": sum(v == "pass" for v in verdicts),
            "fail": sum(v == FAIL for v in verdicts),
            "inconclusive": sum(v == INCONCLUSIVE for v in verdicts),
            "wall_clock_s": total_wall,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as handle:
        json.dump(manifest, handle, indent=2, default=_json_default)
        handle.write("\n")
    if interrupted:
        echo("interrupted; partial results flushed")
        return 130
    return _exit_code(verdicts)


def _consume(results, config, writer, handle, reports_dir, manifest_checks,
             verdicts, echo):
    for job, (report, wall) in zip(config.checks, results):
        writer.writerow(report_row(job.label, report))
        handle.flush()
        path = os.path.join(reports_dir, _safe_name(job.label) + ".json")
        with open(path, "w") as rh:
            payload = {"label": job.label}
            payload.update(report.to_dict())
            json.dump(payload, rh, indent=2, default=_json_default)
            rh.write("\n")
        manifest_checks.append({"label": job.label, "name": job.name,
                                "verdict": report.verdict,
                                "wall_clock_s": wall})
        verdicts.append(report.verdict)
        echo(f"{report.verdict:>12}  {job.label}  "
             f"(ratio {report.ratio:.6g}, {wall:.2f}s)")


def render_results(rows: list[dict]) -> str:
    """Plain-text table for already-parsed CSV rows."""
    buf = io.StringIO()
    widths = {c: len(c) for c in CSV_COLUMNS}
    for row in rows:
        for c in CSV_COLUMNS:
            widths[c] = max(widths[c], len(str(row.get(c, ""))))
    line = "  ".join(f"{{:<{widths[c]}}}" for c in CSV_COLUMNS)
    buf.write(line.format(*CSV_COLUMNS) + "\n")
    for row in rows:
        buf.write(line.format(*[str(row.get(c, "")) for c in CSV_COLUMNS])
                  + "\n")
    return buf.getvalue()
