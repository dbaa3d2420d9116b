import numpy as np
import pytest

from lmd import metrics
from lmd.errors import ContractError
from lmd.metrics import ConfusionMatrix

from oracles import confusion_tally


def cm_of(pred, gt, n, ignore=None):
    return metrics.accumulate(ConfusionMatrix(n), np.asarray(pred), np.asarray(gt), ignore)


class TestAccumulate:
    def test_perfect_is_diagonal(self):
        gt = np.random.default_rng(0).integers(0, 4, (6, 7))
        cm = cm_of(gt, gt, 4)
        assert np.array_equal(cm.counts, np.diag(np.bincount(gt.ravel(), minlength=4)))

    def test_ignored_pixel(self):
        gt = np.zeros((3, 3), dtype=int)
        gt[1, 1] = 255
        assert cm_of(np.zeros((3, 3), dtype=int), gt, 2, ignore=255).total == 8

    def test_matches_tally(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            gt = rng.integers(0, 5, (9, 11))
            gt[rng.random(gt.shape) < 0.1] = 255
            pred = rng.integers(0, 5, gt.shape)
            assert np.array_equal(cm_of(pred, gt, 5, 255).counts, confusion_tally(pred, gt, 5, 255))

    def test_order_independent(self):
        rng = np.random.default_rng(9)
        pairs = [(rng.integers(0, 3, (4, 4)), rng.integers(0, 3, (4, 4))) for _ in range(6)]
        fwd = ConfusionMatrix(3)
        for p, g in pairs:
            fwd = metrics.accumulate(fwd, p, g)
        rev = ConfusionMatrix(3)
        for p, g in reversed(pairs):
            rev = metrics.accumulate(rev, p, g)
        assert fwd == rev

    def test_shape_mismatch(self):
        with pytest.raises(ContractError, match="shape"):
            cm_of(np.zeros((2, 2), int), np.zeros((2, 3), int), 2)

    def test_out_of_range(self):
        with pytest.raises(ContractError, match="out of range"):
            cm_of(np.array([[0, 2]]), np.array([[0, 1]]), 2)


class TestScores:
    cm = ConfusionMatrix(2, [[3, 1], [2, 4]])

    def test_accuracy_hand_tally(self):
        acc, mean = metrics.class_accuracy(self.cm)
        assert acc.tolist() == pytest.approx([0.75, 4 / 6])
        assert mean == pytest.approx((0.75 + 4 / 6) / 2)
        assert mean == pytest.approx(0.7083, abs=1e-4)

    def test_iou_hand_tally(self):
        per, mean = metrics.iou(self.cm)
        assert per.tolist() == pytest.approx([0.5, 4 / 7])

    def test_perfect(self):
        cm = ConfusionMatrix(3, np.diag([4, 5, 6]))
        assert metrics.class_accuracy(cm)[0].tolist() == [1.0, 1.0, 1.0]
        assert metrics.iou(cm)[1] == 1.0

    def test_all_missed_and_disjoint(self):
        cm = ConfusionMatrix(2, [[0, 5], [7, 0]])
        assert metrics.class_accuracy(cm)[0].tolist() == [0.0, 0.0]
        assert metrics.iou(cm)[0].tolist() == [0.0, 0.0]

    def test_undefined_excluded_from_means(self):
        cm = ConfusionMatrix(3, [[2, 0, 0], [0, 0, 0], [1, 0, 1]])
        acc, mean_acc = metrics.class_accuracy(cm)
        assert np.isnan(acc[1]) and mean_acc == pytest.approx((1.0 + 0.5) / 2)
        per, miou = metrics.iou(cm)
        assert np.isnan(per[1]) and miou == pytest.approx((2 / 3 + 0.5) / 2)


def test_dilating_prediction_never_lowers_accuracy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        gt = (rng.random((20, 20)) < 0.2).astype(int)
        pred = (rng.random((20, 20)) < 0.2).astype(int)
        grown = pred.copy()
        grown[rng.random(pred.shape) < 0.3] = 1
        a0 = metrics.class_accuracy(cm_of(pred, gt, 2))[0][1]
        a1 = metrics.class_accuracy(cm_of(grown, gt, 2))[0][1]
        assert a1 >= a0
