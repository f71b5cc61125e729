"""File formats: trace CSV, metric reports, metric curves, run manifests.

Trace CSV
    Header ``angle_<deg>`` per column, comma separated; body rows of ``1`` /
    ``-1``; ``\\n`` line endings; no index column.  A dataset with zero rows
    is a header-only file.

Report (machine format)
    JSON object, keys sorted::

        {"format": "losgen-metric-report", "version": 1, "label": str,
         "repetitions": int, "angles": [int, ...],
         "metrics": {"<angle>": {"<metric>": {"mean": float,
                                              "variance": float,
                                              "values": [float, ...]}}}}

    Floats are written with ``repr`` precision so parsing is lossless.

Metric curve CSV
    Header ``epoch,metric,value``; one record per line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import TraceDataset
from .metrics import METRICS, MetricCurve, MetricReport

_HEADER_RE = re.compile(r"^angle_(\d+)$")

REPORT_FORMAT = "losgen-metric-report"
REPORT_VERSION = 1

# row labels of the human-readable table
METRIC_LABELS = {
    "ks_complement": "KS-test",
    "wasserstein": "Wasserstein Distance",
    "kl": "KL-Divergence",
}


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetFile:
    path: Path
    header: tuple[str, ...]
    rows: int


def write_dataset(dataset: TraceDataset, path) -> DatasetFile:
    path = Path(path)
    if dataset.rows and not dataset.angles:
        raise ValueError("cannot write rows without columns: the CSV format has no way to represent them")
    lines = [",".join(dataset.columns)]
    if dataset.rows:
        txt = np.where(dataset.cells == 1, "1", "-1")
        lines.extend(",".join(r) for r in txt)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return DatasetFile(path, tuple(dataset.columns), dataset.rows)


def _parse_header(line: str) -> tuple[int, ...]:
    names = line.split(",") if line else []
    angles = []
    for name in names:
        m = _HEADER_RE.match(name.strip())
        if not m:
            raise DatasetFormatError(f"bad column name {name!r}; expected angle_<deg>")
        angles.append(int(m.group(1)))
    if len(set(angles)) != len(angles):
        raise DatasetFormatError(f"duplicate angle column in header {line!r}")
    return tuple(angles)


def read_dataset(path) -> TraceDataset:
    """Parse and validate a trace CSV.

    Rows and columns in error messages are 1-based and count body rows only.
    """
    path = Path(path)
    text = path.read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file (missing header)")
    angles = _parse_header(lines[0])
    width = len(angles)
    cells = np.empty((len(lines) - 1, width), dtype=np.int8)
    for r, line in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != width:
            raise DatasetFormatError(f"ragged row {r}: {len(parts)} cells, expected {width}")
        for c, tok in enumerate(parts, start=1):
            if tok == "1":
                cells[r - 1, c - 1] = 1
            elif tok == "-1":
                cells[r - 1, c - 1] = -1
            else:
                raise DatasetFormatError(f"invalid state value at row {r}, column {c}: {tok!r}")
    return TraceDataset(angles, cells)


# -- reports ----------------------------------------------------------------


def report_to_dict(report: MetricReport) -> dict:
    metrics = {}
    for a in report.angles:
        metrics[str(a)] = {
            m: {
                "mean": report.mean[(a, m)],
                "variance": report.variance[(a, m)],
                "values": list(report.values.get((a, m), [])),
            }
            for m in METRICS
            if (a, m) in report.mean
        }
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "label": report.label,
        "repetitions": report.repetitions,
        "angles": list(report.angles),
        "metrics": metrics,
    }


def report_from_dict(d: dict) -> MetricReport:
    if d.get("format") != REPORT_FORMAT:
        raise ValueError(f"not a metric report (format={d.get('format')!r})")
    if d.get("version", 0) > REPORT_VERSION:
        raise ValueError(f"report version {d['version']} is newer than supported {REPORT_VERSION}")
    mean, var, values = {}, {}, {}
    for a_str, per_metric in d["metrics"].items():
        for m, cell in per_metric.items():
            key = (int(a_str), m)
            mean[key] = cell["mean"]
            var[key] = cell["variance"]
            values[key] = cell.get("values", [])
    return MetricReport(tuple(d["angles"]), d["repetitions"], mean, var, values, d.get("label", ""))


def format_table(report: MetricReport, title: str | None = None) -> str:
    """Plain-text table: rows are metrics, a (mean, variance) column pair per angle."""
    title = title or f"Distance between real and synthetic data{f' for {report.label}' if report.label else ''}"
    first = 22
    cell = 12
    head1 = "Metric".ljust(first) + "".join(f"{a}°".center(2 * cell) for a in report.angles)
    head2 = "".ljust(first) + "".join("mean".rjust(cell) + "variance".rjust(cell) for _ in report.angles)
    lines = [title, f"({report.repetitions} repetitions)", head1, head2]
    for m in METRICS:
        row = METRIC_LABELS[m].ljust(first)
        for a in report.angles:
            row += f"{report.mean[(a, m)]:.4f}".rjust(cell) + f"{report.variance[(a, m)]:.4g}".rjust(cell)
        lines.append(row)
    return "\n".join(lines) + "\n"


def emit_report(report: MetricReport, fmt: str, path) -> Path:
    """Write ``report`` as ``"table"`` (human) or ``"json"`` (machine)."""
    path = Path(path)
    if fmt in ("table", "human-table", "human"):
        path.write_text(format_table(report))
    elif fmt in ("json", "machine", "machine-structured"):
        path.write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def read_report(path) -> MetricReport:
    return report_from_dict(json.loads(Path(path).read_text()))


# -- curves, summaries, manifests --------------------------------------------


def write_curve(curve: MetricCurve, path) -> Path:
    path = Path(path)
    lines = ["epoch,metric,value"] + [f"{e},{m},{v!r}" for e, m, v in curve.records]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_curve(path) -> MetricCurve:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "epoch,metric,value":
        raise ValueError(f"{path}: not a metric-curve CSV")
    curve = MetricCurve()
    for line in lines[1:]:
        e, m, v = line.split(",")
        curve.add(int(e), m, float(v))
    return curve


def write_rows_csv(rows: list[dict], path) -> Path:
    """Small helper for flat tables such as per-angle distribution summaries."""
    path = Path(path)
    if not rows:
        path.write_text("")
        return path
    keys = list(rows[0])
    out = [",".join(keys)]
    for r in rows:
        out.append(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys))
    path.write_text("\n".join(out) + "\n")
    return path


def write_manifest(path, **fields) -> Path:
    path = Path(path)
    path.write_text(json.dumps(fields, indent=1, sort_keys=True, default=str) + "\n")
    return path
