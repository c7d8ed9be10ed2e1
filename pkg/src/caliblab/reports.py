"""File formats: prediction logs, report JSON, reliability CSV and SVG.

Floats in CSV artifacts are printed with 13 significant digits so logs
round-trip far inside the 1e-9 tolerances used downstream, and identical
runs produce byte-identical files. All writers go through a
write-to-temporary-then-rename step, so a crash never leaves a partially
written artifact at the target path.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .metrics import (
    BinTable,
    CalibrationReport,
    PredictionRecord,
    validate_records,
)

_FLOAT_FMT = "{:.12e}"

_LOG_FIXED_FIELDS = [
    "sample_id",
    "true_label",
    "pred_label",
    "confidence",
    "uncertainty",
]


def atomic_write_text(path, text: str) -> None:
    """Write `text` to `path` via a temporary file in the same directory."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


# -- prediction logs -----------------------------------------------------------


def log_header(n_classes: int) -> list[str]:
    return _LOG_FIXED_FIELDS + [f"p_{c}" for c in range(n_classes)]


def prediction_log_text(records: list[PredictionRecord]) -> str:
    validate_records(records)
    n_classes = records[0].probs.shape[0]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(log_header(n_classes))
    for rec in records:
        row = [
            rec.sample_id,
            rec.true_label,
            rec.pred_label,
            _FLOAT_FMT.format(rec.confidence),
            _FLOAT_FMT.format(rec.uncertainty),
        ]
        row.extend(_FLOAT_FMT.format(p) for p in rec.probs)
        writer.writerow(row)
    return buf.getvalue()


def write_prediction_log(path, records: list[PredictionRecord]) -> None:
    atomic_write_text(path, prediction_log_text(records))


def read_prediction_log(path) -> list[PredictionRecord]:
    """Parse a prediction log; malformed content names the 1-based line."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: line 1: empty file") from None
        n_classes = len(header) - len(_LOG_FIXED_FIELDS)
        if n_classes < 2 or header != log_header(n_classes):
            raise ValueError(f"{path}: line 1: bad header")
        records: list[PredictionRecord] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                rec = PredictionRecord(
                    sample_id=int(row[0]),
                    true_label=int(row[1]),
                    pred_label=int(row[2]),
                    confidence=float(row[3]),
                    uncertainty=float(row[4]),
                    probs=np.array([float(v) for v in row[5:]]),
                )
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            records.append(rec)
    if not records:
        raise ValueError(f"{path}: no data rows")
    try:
        validate_records(records)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return records


# -- report JSON -----------------------------------------------------------------


def _table_payload(table: BinTable) -> dict:
    return {
        "scheme": table.scheme,
        "lower": [float(v) for v in table.lower],
        "upper": [float(v) for v in table.upper],
        "count": [int(v) for v in table.count],
        "mean_confidence": [float(v) for v in table.mean_confidence],
        "accuracy": [float(v) for v in table.accuracy],
    }


def report_payload(report: CalibrationReport, meta: dict | None = None) -> dict:
    payload = {
        "bacc": report.bacc,
        "ece": report.ece,
        "aece": report.aece,
        "mce": report.mce,
        "oe": report.oe,
        "brier": report.brier,
        "n_bins": report.n_bins,
        "n_samples": report.n_samples,
        "bins": {
            "fixed": _table_payload(report.fixed_bins),
            "adaptive": _table_payload(report.adaptive_bins),
        },
        "meta": meta or {},
    }
    return payload


def report_json_text(report: CalibrationReport, meta: dict | None = None) -> str:
    return json.dumps(report_payload(report, meta), indent=2) + "\n"


def write_report_json(path, report: CalibrationReport, meta: dict | None = None) -> None:
    atomic_write_text(path, report_json_text(report, meta))


def read_report_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- reliability diagram ----------------------------------------------------------


def reliability_csv_text(table: BinTable) -> str:
    """One row per non-empty bin: bin_lo,bin_hi,count,mean_conf,accuracy."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_lo", "bin_hi", "count", "mean_conf", "accuracy"])
    for k in range(table.n_bins):
        if table.count[k] == 0:
            continue
        writer.writerow(
            [
                _FLOAT_FMT.format(table.lower[k]),
                _FLOAT_FMT.format(table.upper[k]),
                int(table.count[k]),
                _FLOAT_FMT.format(table.mean_confidence[k]),
                _FLOAT_FMT.format(table.accuracy[k]),
            ]
        )
    return buf.getvalue()


def write_reliability_csv(path, table: BinTable) -> None:
    atomic_write_text(path, reliability_csv_text(table))


_SVG_SIZE = 440
_SVG_PAD = 50


def _sx(value: float) -> float:
    return _SVG_PAD + value * (_SVG_SIZE - 2 * _SVG_PAD)


def _sy(value: float) -> float:
    return _SVG_SIZE - _SVG_PAD - value * (_SVG_SIZE - 2 * _SVG_PAD)


def reliability_svg_text(table: BinTable) -> str:
    """Reliability diagram: accuracy bars per bin plus the identity diagonal."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_SIZE}" '
        f'height="{_SVG_SIZE}" viewBox="0 0 {_SVG_SIZE} {_SVG_SIZE}">',
        f'<rect x="0" y="0" width="{_SVG_SIZE}" height="{_SVG_SIZE}" fill="white"/>',
        f'<rect x="{_sx(0):.1f}" y="{_sy(1):.1f}" '
        f'width="{_sx(1) - _sx(0):.1f}" height="{_sy(0) - _sy(1):.1f}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
    ]
    for k in range(table.n_bins):
        if table.count[k] == 0:
            continue
        lo = max(float(table.lower[k]), 0.0)
        hi = min(float(table.upper[k]), 1.0)
        acc = float(table.accuracy[k])
        conf = float(table.mean_confidence[k])
        x = _sx(lo)
        width = max(_sx(hi) - _sx(lo), 1.0)
        parts.append(
            f'<rect x="{x:.2f}" y="{_sy(acc):.2f}" width="{width:.2f}" '
            f'height="{max(_sy(0) - _sy(acc), 0.0):.2f}" '
            'fill="#4878cf" fill-opacity="0.7" stroke="#2a4d8f" stroke-width="0.5"/>'
        )
        parts.append(
            f'<line x1="{x:.2f}" y1="{_sy(conf):.2f}" x2="{x + width:.2f}" '
            f'y2="{_sy(conf):.2f}" stroke="#c44e52" stroke-width="1.5"/>'
        )
    parts.append(
        f'<line x1="{_sx(0):.1f}" y1="{_sy(0):.1f}" x2="{_sx(1):.1f}" '
        f'y2="{_sy(1):.1f}" stroke="#222" stroke-width="1" stroke-dasharray="6,4"/>'
    )
    parts.append(
        f'<text x="{_sx(0.5):.1f}" y="{_SVG_SIZE - 12}" text-anchor="middle" '
        'font-family="sans-serif" font-size="13">confidence</text>'
    )
    parts.append(
        f'<text x="14" y="{_sy(0.5):.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 14 {_sy(0.5):.1f})">accuracy</text>'
    )
    parts.append(
        f'<text x="{_sx(0):.1f}" y="{_SVG_SIZE - 32}" font-family="sans-serif" '
        f'font-size="11">scheme={table.scheme} bins={table.n_bins} '
        f'n={table.n_samples}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_reliability_svg(path, table: BinTable) -> None:
    atomic_write_text(path, reliability_svg_text(table))


# -- multi-artifact commit ---------------------------------------------------------


def commit_artifacts(plan: list[tuple[object, str]]) -> None:
    """Write several artifacts with all-or-nothing semantics.

    Each entry is (path, text). Every payload is staged to a temporary file
    first; only after all stages succeed are the targets renamed into place.
    """
    staged: list[tuple[Path, Path]] = []
    try:
        for path, text in plan:
            path = Path(path)
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
