"""Cubic lane model fitting on per-band candidate points.

The lane is modelled as ``col = a*row**3 + b*row**2 + c*row + d``. Each
group of lane pixels is first reduced to one mean point per horizontal band
of the image; the cubic is then a weighted least-squares fit through those
points.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P

DEFAULT_BLOCKS = 32


class CandidatePoint(NamedTuple):
    row: float
    col: float
    weight: int


class LanePoint(NamedTuple):
    row: float
    col: float
    extrapolated: bool


@dataclass(frozen=True)
class LaneModel:
    a: float
    b: float
    c: float
    d: float
    degree: int
    domain: tuple  # (row_min, row_max) of the candidates used
    residual: float = 0.0  # weighted sum of squared column residuals

    @property
    def coefficients(self):
        return (self.a, self.b, self.c, self.d)


def band_of_rows(rows, height, num_blocks):
    """Band index of each row for ``num_blocks`` near-equal horizontal bands."""
    return (np.asarray(rows, dtype=np.int64) * num_blocks) // height


def block_candidates(group_labels, group_id, num_blocks=DEFAULT_BLOCKS):
    if num_blocks < 1:
        raise ValueError(f"num_blocks must be >= 1, got {num_blocks}")
    group_labels = np.asarray(group_labels)
    rows, cols = np.nonzero(group_labels == group_id)
    if rows.size == 0:
        return []
    bands = band_of_rows(rows, group_labels.shape[0], num_blocks)
    counts = np.bincount(bands, minlength=num_blocks)
    row_sum = np.bincount(bands, weights=rows, minlength=num_blocks)
    col_sum = np.bincount(bands, weights=cols, minlength=num_blocks)
    return [
        CandidatePoint(row_sum[k] / counts[k], col_sum[k] / counts[k], int(counts[k]))
        for k in np.flatnonzero(counts)
    ]


def _solve(a, b):
    """Gaussian elimination with partial pivoting on a small dense system."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            raise np.linalg.LinAlgError("singular normal equations")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= f[:, None] * a[k, k:]
        b[k + 1:] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def fit_cubic(candidates):
    """Weighted least-squares fit of col as a polynomial in row.

    The degree is min(3, distinct rows - 1). Rows are rescaled to [-1, 1]
    before forming the normal equations and the solution is mapped back to
    image coordinates.
    """
    if not candidates:
        raise ValueError("fit_cubic needs at least one candidate")
    pts = sorted(candidates)
    rows = np.array([p.row for p in pts], dtype=np.float64)
    cols = np.array([p.col for p in pts], dtype=np.float64)
    wts = np.array([p.weight for p in pts], dtype=np.float64)
    lo, hi = rows.min(), rows.max()
    degree = min(3, len(np.unique(rows)) - 1)
    mid = (lo + hi) / 2.0
    half = (hi - lo) / 2.0 if hi > lo else 1.0
    t = (rows - mid) / half

    vander = t[:, None] ** np.arange(degree + 1)
    normal = vander.T @ (wts[:, None] * vander)
    rhs = vander.T @ (wts * cols)
    scaled = _solve(normal, rhs)

    # substitute t = (row - mid) / half back into sum scaled[k] * t**k
    coef = np.zeros(1)
    base = np.ones(1)
    shift = np.array([-mid / half, 1.0 / half])
    for k, ck in enumerate(scaled):
        if k:
            base = P.polymul(base, shift)
        coef = P.polyadd(coef, ck * base)
    coef = np.pad(coef, (0, 4 - len(coef)))
    d, c, b, a = (float(v) for v in coef[:4])
    fitted = ((a * rows + b) * rows + c) * rows + d
    residual = float(np.sum(wts * (cols - fitted) ** 2))
    return LaneModel(a, b, c, d, degree, (float(lo), float(hi)), residual)


def evaluate_lane(model, rows):
    lo, hi = model.domain
    out = []
    for r in rows:
        r = float(r)
        col = ((model.a * r + model.b) * r + model.c) * r + model.d
        out.append(LanePoint(r, col, not lo <= r <= hi))
    return out
