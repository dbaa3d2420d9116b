"""Median frequency class balancing.

Frequencies built from label maps are kept as exact ``Fraction`` values so
the weights ``median(p) / p_c`` come out exactly for integer pixel counts;
they are converted to float only at the end.
"""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class ClassFrequencies:
    p: tuple  # per class: Fraction/float frequency, or None when absent
    present_images: tuple  # per class: number of images containing it

    @property
    def present(self):
        return tuple(v is not None for v in self.p)

    def as_array(self):
        """Frequencies as float64 with NaN for absent classes."""
        return np.array([np.nan if v is None else float(v) for v in self.p])


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))
        self.w.setflags(write=False)


def class_frequencies(label_maps, num_classes, ignore_id=None):
    """p_c = pixels of class c / total pixels of the images where c appears.

    Pixels equal to ``ignore_id`` count toward neither term.
    """
    pixels = [0] * num_classes
    totals = [0] * num_classes
    images = [0] * num_classes
    for k, labels in enumerate(label_maps):
        labels = np.asarray(labels).ravel()
        if ignore_id is not None:
            labels = labels[labels != ignore_id]
        bad = (labels < 0) | (labels >= num_classes)
        if bad.any():
            raise ContractError(
                f"label map {k}: id {int(labels[bad][0])} out of range for {num_classes} classes"
            )
        counts = np.bincount(labels.astype(np.int64), minlength=num_classes)
        n = int(counts.sum())
        for c in np.flatnonzero(counts):
            pixels[c] += int(counts[c])
            totals[c] += n
            images[c] += 1
    p = tuple(Fraction(pixels[c], totals[c]) if images[c] else None for c in range(num_classes))
    return ClassFrequencies(p, tuple(images))


def median(values):
    values = sorted(values)
    mid = len(values) // 2
    if len(values) % 2:
        return values[mid]
    return (values[mid - 1] + values[mid]) / 2


def median_frequency_weights(freqs):
    present = [v for v in freqs.p if v is not None]
    if not present:
        raise ContractError("median frequency balancing needs at least one present class")
    if any(v <= 0 for v in present):
        raise ContractError("present classes must have positive frequency")
    m = median(present)
    return ClassWeights([0.0 if v is None else float(m / v) for v in freqs.p])


def scale_class_weight(weights, class_id, factor):
    if not 0 <= class_id < len(weights.w):
        raise ContractError(f"class id {class_id} out of range for {len(weights.w)} classes")
    if not factor > 0:
        raise ContractError(f"scale factor must be positive, got {factor}")
    w = weights.w.copy()
    w[class_id] *= factor
    return ClassWeights(w)
