"""Report files for a batch.

Everything written here is a pure function of the config and seed, so a rerun
overwrites the files with identical bytes.  Wall time is the one exception and
goes to its own ``timing.json``.
"""

from __future__ import annotations

import csv
from pathlib import Path

from . import _io
from .experiment import BatchReport

REPORT_SCHEMA = 1
FILES = ("report.json", "runs.csv", "paths_sample.csv", "costs.csv")


def report_dict(report: BatchReport) -> dict:
    config = report.config.to_dict()
    # where the files go is not part of what they say
    config.pop("output_dir")
    return {
        "schema_version": REPORT_SCHEMA,
        "config": config,
        "aggregates": report.aggregates(),
        "runs": [r.to_dict() for r in report.runs],
        "failures": [vars(f) for f in report.failures],
    }


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open(path: Path):
    try:
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report file: {exc.strerror}", str(path)) from exc


def emit_report(report: BatchReport, output_dir) -> list[Path]:
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory: {exc.strerror}", str(out)) from exc
    fmt = _io.fmt

    paths = [out / name for name in FILES]
    with _open(paths[0]) as fh:
        fh.write(_io.dumps(report_dict(report)))

    with _open(paths[1]) as fh:
        w = _writer(fh)
        w.writerow(["run", "seed", "fair", "qlbs", "sq_err", "Lp", "Lstar"])
        for r in report.runs:
            w.writerow(
                [
                    r.run_index,
                    r.seed_used,
                    fmt(r.fair_price),
                    fmt(r.qlbs_price),
                    fmt(r.squared_error),
                    fmt(r.mean_cost_postulated),
                    fmt(r.mean_cost_optimal),
                ]
            )

    with _open(paths[2]) as fh:
        w = _writer(fh)
        w.writerow(["path", "t", "kind", "rate"])
        for kind in ("unaffected", "quoted", "implied"):
            if kind not in report.sample_paths:
                continue
            ids, rates = report.sample_paths[kind]
            for k, row in zip(ids, rates):
                for t, x in enumerate(row):
                    w.writerow([int(k), t, kind, fmt(x)])

    with _open(paths[3]) as fh:
        w = _writer(fh)
        w.writerow(["run", "Lp", "Lstar"])
        for r in report.runs:
            w.writerow([r.run_index, fmt(r.mean_cost_postulated), fmt(r.mean_cost_optimal)])
    return paths


def emit_timing(report: BatchReport, output_dir) -> Path:
    path = Path(output_dir) / "timing.json"
    path.write_text(_io.dumps({"wall_time_seconds": report.wall_time}))
    return path
