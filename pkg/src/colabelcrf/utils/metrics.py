"""Segmentation accuracy: confusion tallies and average per-class accuracy."""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from colabelcrf.core.errors import DimensionError, ErrorCodes, ValueRangeError
from colabelcrf.utils.formats import VOID_LABEL, Palette

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("class_id", "name", "pixels", "correct", "accuracy")


@dataclass
class ConfusionMatrix:
    """Ground truth rows, prediction columns."""

    counts: np.ndarray
    ignored: int = 0

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"Confusion counts must be square, got {counts.shape}")
        if (counts < 0).any() or self.ignored < 0:
            raise ValueRangeError("Confusion counts must be non-negative")
        self.counts = counts

    @classmethod
    def zeros(cls, labels: int) -> ConfusionMatrix:
        return cls(np.zeros((labels, labels), dtype=np.int64))

    @property
    def labels(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def evaluated(self) -> int:
        return self.total + self.ignored

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if other.labels != self.labels:
            raise DimensionError(
                f"Cannot merge confusion matrices over {self.labels} and {other.labels} labels"
            )
        return ConfusionMatrix(self.counts + other.counts, self.ignored + other.ignored)


def confusion(
    pred: np.ndarray,
    gt: np.ndarray,
    labels: int,
    ignore: int = VOID_LABEL,
) -> ConfusionMatrix:
    """Tally ``pred`` against ``gt``; pixels whose ground truth is ``ignore`` are skipped."""
    p = np.asarray(pred).reshape(-1).astype(np.int64)
    g = np.asarray(gt).reshape(-1).astype(np.int64)
    if p.size != g.size:
        raise DimensionError(
            f"Prediction has {p.size} pixels, ground truth has {g.size}",
            expected=g.size,
            actual=p.size,
        )
    keep = g != ignore
    p, g = p[keep], g[keep]
    for what, values in (("ground truth", g), ("prediction", p)):
        bad = (values < 0) | (values >= labels)
        if bad.any():
            raise ValueRangeError(
                f"{what} label {int(values[bad][0])} is outside [0, {labels})",
                code=ErrorCodes.VALUE_LABEL_RANGE,
            )
    counts = np.bincount(g * labels + p, minlength=labels * labels).reshape(labels, labels)
    return ConfusionMatrix(counts, int((~keep).sum()))


@dataclass
class AccuracyReport:
    """Per-class accuracy (NaN where the class is absent from the ground truth)."""

    per_class: np.ndarray
    pixels: np.ndarray
    correct: np.ndarray
    average: float
    global_accuracy: float
    absent: list[int] = field(default_factory=list)


def average_per_class_accuracy(
    cm: ConfusionMatrix,
    absent_as_zero: bool = False,
) -> AccuracyReport:
    """Mean over classes of diagonal / row sum.

    Classes with no ground-truth pixels are left out of the mean unless
    ``absent_as_zero`` counts them as 0.
    """
    pixels = cm.counts.sum(axis=1)
    correct = np.diag(cm.counts).copy()
    present = pixels > 0
    if not present.any():
        raise ValueRangeError(
            "No evaluated pixels: every ground-truth row is empty",
            ignored=cm.ignored,
        )
    per_class = np.full(cm.labels, np.nan)
    per_class[present] = correct[present] / pixels[present]
    absent = [int(i) for i in np.flatnonzero(~present)]
    if absent:
        logger.warning("Classes absent from ground truth: %s", absent)
    if absent_as_zero:
        average = float(np.nan_to_num(per_class, nan=0.0).mean())
    else:
        average = float(per_class[present].mean())
    return AccuracyReport(
        per_class=per_class,
        pixels=pixels,
        correct=correct,
        average=average,
        global_accuracy=float(correct.sum() / pixels.sum()),
        absent=absent,
    )


def evaluate_pairs(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
    labels: int,
    ignore: int = VOID_LABEL,
) -> ConfusionMatrix:
    """Sum of per-frame confusions."""
    total = ConfusionMatrix.zeros(labels)
    for pred, gt in pairs:
        total = total + confusion(pred, gt, labels, ignore)
    return total


def write_metrics_csv(
    path: str | Path,
    report: AccuracyReport,
    palette: Palette | None = None,
) -> Path:
    """One row per class, then ``average`` and ``global`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for label, acc in enumerate(report.per_class):
            name = palette.name(label) if palette else f"class_{label}"
            writer.writerow([
                label,
                name,
                int(report.pixels[label]),
                int(report.correct[label]),
                "" if np.isnan(acc) else f"{acc:.6f}",
            ])
        writer.writerow(["average", "", int(report.pixels.sum()), int(report.correct.sum()),
                         f"{report.average:.6f}"])
        writer.writerow(["global", "", int(report.pixels.sum()), int(report.correct.sum()),
                         f"{report.global_accuracy:.6f}"])
    return path


__all__ = [
    "CSV_COLUMNS",
    "ConfusionMatrix",
    "confusion",
    "AccuracyReport",
    "average_per_class_accuracy",
    "evaluate_pairs",
    "write_metrics_csv",
]
