"""Confusion matrix, per-class accuracy (recall) and IoU.

Undefined per-class values (zero denominator) are NaN and are left out of
the averages.
"""
import numpy as np

from .errors import ContractError


class ConfusionMatrix:
    """counts[g, p] = number of pixels with ground truth g predicted as p."""

    def __init__(self, num_classes, counts=None):
        self.num_classes = int(num_classes)
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.shape != (num_classes, num_classes) or (counts < 0).any():
            raise ContractError(f"counts must be a non-negative {num_classes}x{num_classes} matrix")
        counts.setflags(write=False)
        self.counts = counts

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if self.num_classes != other.num_classes:
            raise ContractError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.counts, other.counts)


def accumulate(cm, pred, gt, ignore_id=None):
    """Return ``cm`` plus the counts of one prediction/ground-truth pair."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    pred = pred.ravel().astype(np.int64)
    gt = gt.ravel().astype(np.int64)
    if ignore_id is not None:
        keep = gt != ignore_id
        pred, gt = pred[keep], gt[keep]
    n = cm.num_classes
    for name, arr in (("ground truth", gt), ("prediction", pred)):
        bad = (arr < 0) | (arr >= n)
        if bad.any():
            raise ContractError(f"{name} id {int(arr[bad][0])} out of range for {n} classes")
    tally = np.bincount(gt * n + pred, minlength=n * n).reshape(n, n)
    return ConfusionMatrix(n, cm.counts + tally)


def _ratio(num, den):
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def _mean(values):
    defined = values[~np.isnan(values)]
    return float(defined.mean()) if defined.size else float("nan")


def class_accuracy(cm):
    """Per-class recall and its mean over classes with ground-truth pixels."""
    acc = _ratio(np.diag(cm.counts).astype(np.float64), cm.counts.sum(axis=1))
    return acc, _mean(acc)


def iou(cm):
    """Per-class intersection-over-union and the mean IoU."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - np.diag(cm.counts)
    per_class = _ratio(tp, union)
    return per_class, _mean(per_class)
