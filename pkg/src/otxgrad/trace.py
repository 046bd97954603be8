"""Measurement records shared by the solvers and the benchmark harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass


@dataclass(frozen=True)
class TraceRecord:
    """One measurement: solver progress at a given iteration.

    gap is None when no reference value was available; trial is filled in by
    the benchmark harness (None for standalone solver runs).
    """

    iter: int
    matvec_equiv: float
    wall_ms: float
    rounded_cost: float
    gap: float | None
    row_violation_raw: float
    col_violation_raw: float
    trial: int | None = None


_COLUMNS = ["iter", "matvec_equiv", "wall_ms", "rounded_cost", "gap",
            "row_violation_raw", "col_violation_raw"]


def write_trace_csv(records, path) -> None:
    """CSV dump; the gap cell is empty when no oracle reference was present.
    A leading trial column appears when the records carry trial numbers."""
    records = list(records)
    with_trial = any(rec.trial is not None for rec in records)
    cols = (["trial"] + _COLUMNS) if with_trial else _COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in records:
            row = [rec.iter, repr(rec.matvec_equiv), repr(rec.wall_ms),
                   repr(rec.rounded_cost),
                   "" if rec.gap is None else repr(rec.gap),
                   repr(rec.row_violation_raw), repr(rec.col_violation_raw)]
            if with_trial:
                row = [rec.trial] + row
            w.writerow(row)
