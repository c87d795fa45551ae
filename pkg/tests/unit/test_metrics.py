"""Tests for confusion tallies and average per-class accuracy."""

import csv

import numpy as np
import pytest

from colabelcrf.core.errors import DimensionError, ValueRangeError
from colabelcrf.utils.formats import Palette, PaletteEntry
from colabelcrf.utils.metrics import (
    CSV_COLUMNS,
    ConfusionMatrix,
    average_per_class_accuracy,
    confusion,
    evaluate_pairs,
    write_metrics_csv,
)


class TestConfusion:
    """Pixel tallies."""

    def test_perfect_prediction_is_diagonal(self, rng):
        gt = rng.integers(0, 4, size=(6, 5))
        cm = confusion(gt, gt, 4)
        assert not (cm.counts - np.diag(np.diag(cm.counts))).any()
        assert cm.total == 30

    def test_hand_tally(self):
        cm = confusion(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 2)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])

    def test_all_ignored(self):
        cm = confusion(np.zeros(5, dtype=int), np.full(5, 255), 3)
        assert cm.total == 0
        assert cm.ignored == 5
        assert cm.evaluated == 5

    def test_ignored_prediction_label_is_not_checked(self):
        cm = confusion(np.array([9, 0]), np.array([255, 0]), 2)
        assert cm.counts[0, 0] == 1

    def test_prediction_out_of_range(self):
        with pytest.raises(ValueRangeError):
            confusion(np.array([3]), np.array([0]), 2)

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            confusion(np.zeros(3), np.zeros(4), 2)

    def test_sum_over_frames(self):
        pairs = [
            (np.array([0, 1]), np.array([0, 0])),
            (np.array([1, 255]), np.array([1, 255])),
        ]
        cm = evaluate_pairs(pairs, 2)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 1]])
        assert cm.ignored == 1

    def test_merge_label_mismatch(self):
        with pytest.raises(DimensionError):
            ConfusionMatrix.zeros(2) + ConfusionMatrix.zeros(3)


class TestAccuracy:
    """Average per-class accuracy."""

    def test_hand_example(self):
        cm = confusion(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 2)
        report = average_per_class_accuracy(cm)
        np.testing.assert_allclose(report.per_class, [0.5, 1.0])
        assert report.average == pytest.approx(0.75)
        assert report.global_accuracy == pytest.approx(0.75)

    def test_absent_class_is_skipped_by_default(self):
        cm = confusion(np.array([0, 0, 1]), np.array([0, 0, 0]), 3)
        report = average_per_class_accuracy(cm)
        assert report.absent == [1, 2]
        assert np.isnan(report.per_class[1])
        assert report.average == pytest.approx(2.0 / 3.0)

    def test_absent_class_counted_as_zero(self):
        cm = confusion(np.array([0, 0]), np.array([0, 0]), 2)
        assert average_per_class_accuracy(cm, absent_as_zero=True).average == pytest.approx(0.5)

    def test_all_ignored_is_an_error(self):
        cm = confusion(np.zeros(4, dtype=int), np.full(4, 255), 2)
        with pytest.raises(ValueRangeError):
            average_per_class_accuracy(cm)

    def test_label_permutation_invariance(self, rng):
        labels = 4
        gt = rng.integers(0, labels, size=200)
        pred = np.where(rng.uniform(size=200) < 0.7, gt, rng.integers(0, labels, size=200))
        perm = rng.permutation(labels)
        a = average_per_class_accuracy(confusion(pred, gt, labels)).average
        b = average_per_class_accuracy(confusion(perm[pred], perm[gt], labels)).average
        assert a == pytest.approx(b)

    def test_bounds(self, rng):
        gt = rng.integers(0, 3, size=50)
        pred = rng.integers(0, 3, size=50)
        report = average_per_class_accuracy(confusion(pred, gt, 3))
        assert 0.0 <= report.average <= 1.0


class TestCsv:
    """Per-class CSV output."""

    def test_rows(self, tmp_path):
        cm = confusion(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 3)
        palette = Palette((PaletteEntry(0, (0, 0, 1), "sky"), PaletteEntry(1, (0, 1, 0), "road")))
        path = write_metrics_csv(tmp_path / "out" / "metrics.csv", average_per_class_accuracy(cm),
                                 palette)
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[1] == ["0", "sky", "2", "1", "0.500000"]
        assert rows[2] == ["1", "road", "2", "2", "1.000000"]
        assert rows[3] == ["2", "class_2", "0", "0", ""]
        assert rows[4][0] == "average" and rows[4][-1] == "0.750000"
        assert rows[5][0] == "global"
