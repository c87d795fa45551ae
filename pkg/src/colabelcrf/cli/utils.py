"""Utility functions for the command-line interface."""

from __future__ import annotations

import argparse
import csv
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from colabelcrf.core.errors import ConfigError
from colabelcrf.core.solver import PHASES, SolverReport

REPORT_COLUMNS = ("batch", "first_frame", "frames", "variables", "iterations", *PHASES, "total", "energy")
BENCH_COLUMNS = ("n", "seconds", *PHASES)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})
    return path


def report_rows(
    reports: Sequence[SolverReport], batch: int, frames: int, pixels: int
) -> list[dict[str, Any]]:
    """One row per batch window plus a ``total`` row."""
    rows = []
    for index, report in enumerate(reports):
        first = index * batch
        count = min(batch, frames - first)
        rows.append(_report_row(str(index), first, count, count * pixels, report))
    total = SolverReport()
    for report in reports:
        total = total.merge(report)
    rows.append(_report_row("total", 0, frames, frames * pixels, total))
    return rows


def _report_row(name: str, first: int, frames: int, variables: int, report: SolverReport) -> dict[str, Any]:
    row: dict[str, Any] = {
        "batch": name,
        "first_frame": first,
        "frames": frames,
        "variables": variables,
        "iterations": report.iterations,
    }
    for phase in PHASES:
        row[phase] = f"{report.timings.get(phase, 0.0):.6f}"
    row["total"] = f"{report.seconds:.6f}"
    row["energy"] = "" if report.energy is None else f"{report.energy:.6f}"
    return row


def noise_value(text: str) -> float | None:
    """argparse type for ``--noise``: a rate in [0, 1] or ``auto``."""
    if text.strip().lower() == "auto":
        return None
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a rate in [0, 1] or 'auto', got {text!r}") from exc
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"noise rate must lie in [0, 1], got {value}")
    return value


def geometric_sizes(min_n: int, max_n: int) -> list[int]:
    """min_n, 2*min_n, ... up to max_n."""
    if min_n < 1 or max_n < min_n:
        raise ConfigError(
            f"Need 1 <= --min-n <= --max-n, got {min_n} and {max_n}", flag="--min-n"
        )
    sizes = []
    n = min_n
    while n <= max_n:
        sizes.append(n)
        n *= 2
    return sizes


def fit_exponent(sizes: Sequence[int], seconds: Sequence[float]) -> float:
    """Slope of log(seconds) against log(n) by least squares."""
    if len(sizes) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=np.float64)),
                          np.log(np.maximum(np.asarray(seconds, dtype=np.float64), 1e-9)), 1)
    return float(slope)


__all__ = [
    "REPORT_COLUMNS",
    "BENCH_COLUMNS",
    "write_csv",
    "report_rows",
    "noise_value",
    "geometric_sizes",
    "fit_exponent",
]
