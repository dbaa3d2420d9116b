"""Lane grouping: lane mask, supermarkings and their pairwise merge cost.

A supermarking is one connected region of lane pixels. Two supermarkings are
compared through four endpoint-to-endpoint distances (geometric term) and
four endpoint-to-principal-line distances (directional term). The
directional distances are standardised onto the mean and spread of the
geometric ones before the two are averaged into a single connection cost.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_CONNECTIVITY = 8
DEFAULT_MIN_PIXELS = 8
DEFAULT_THRESHOLD_FRACTION = 0.05
VAR_EPS = 1e-12

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True)
class Supermarking:
    label: int
    pixel_count: int
    centroid: tuple  # (row, col)
    top: tuple  # endpoint with the smallest projection on direction
    bottom: tuple  # endpoint with the largest projection on direction
    direction: tuple  # unit (drow, dcol), drow >= 0
    bbox: tuple  # (min_row, min_col, max_row, max_col)


@dataclass(frozen=True)
class PairDistances:
    dist_g: np.ndarray
    dist_r: np.ndarray
    dist_r_norm: np.ndarray


def extract_lane_mask(labels, lane_class_id):
    return np.asarray(labels) == lane_class_id


def default_threshold(shape):
    h, w = shape
    return DEFAULT_THRESHOLD_FRACTION * float(np.hypot(h, w))


def connected_components(mask, connectivity=DEFAULT_CONNECTIVITY, min_pixels=DEFAULT_MIN_PIXELS):
    """Label connected regions of ``mask``.

    Returns ``(label_map, supermarkings)``. Regions smaller than
    ``min_pixels`` are dropped; survivors are numbered 1..K in the raster
    order of their first pixel.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = np.asarray(mask, dtype=bool)
    raw, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    flat = raw.ravel()
    sizes = np.bincount(flat, minlength=n + 1)
    # first raster position of every raw label
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    keep = [k for k in range(1, n + 1) if sizes[k] >= min_pixels]
    keep.sort(key=lambda k: first[k])
    remap = np.zeros(n + 1, dtype=np.int64)
    for new, k in enumerate(keep, start=1):
        remap[k] = new
    label_map = remap[raw]

    marks = []
    if keep:
        rows, cols = np.nonzero(label_map)
        ids = label_map[rows, cols]
        order = np.argsort(ids, kind="stable")
        bounds = np.searchsorted(ids[order], np.arange(1, len(keep) + 2))
        for new in range(1, len(keep) + 1):
            sel = order[bounds[new - 1]:bounds[new]]
            marks.append(supermarking_features(np.column_stack([rows[sel], cols[sel]]), new))
    return label_map, marks


def supermarking_features(pixels, label=0):
    """Geometric summary of one region given its (row, col) pixel list.

    The direction is the principal axis of the pixel covariance, oriented
    toward increasing row (increasing column when horizontal). Single pixels
    and isotropic regions default to straight down, (1, 0).
    """
    pts = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] - evals[0] <= 1e-12 * max(evals[1], 1.0):
        direction = np.array([1.0, 0.0])
    else:
        direction = evecs[:, 1]
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            direction = -direction
        direction = direction / np.linalg.norm(direction)
    proj = centered @ direction
    top = pts[np.argmin(proj)]
    bottom = pts[np.argmax(proj)]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return Supermarking(
        label=int(label),
        pixel_count=len(pts),
        centroid=(float(centroid[0]), float(centroid[1])),
        top=(float(top[0]), float(top[1])),
        bottom=(float(bottom[0]), float(bottom[1])),
        direction=(float(direction[0]), float(direction[1])),
        bbox=(int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1])),
    )


def _line_distance(point, mark):
    # perpendicular distance from point to the principal line through the centroid
    dr = point[0] - mark.centroid[0]
    dc = point[1] - mark.centroid[1]
    return abs(dr * mark.direction[1] - dc * mark.direction[0])


def normalize_directional(dist_r, dist_g):
    """Map dist_r onto the mean and population variance of dist_g."""
    dist_r = np.asarray(dist_r, dtype=np.float64)
    dist_g = np.asarray(dist_g, dtype=np.float64)
    mean_dir, var_dir = dist_r.mean(), dist_r.var()
    mean_geo, var_geo = dist_g.mean(), dist_g.var()
    if var_dir < VAR_EPS:
        return np.full(dist_r.shape, mean_geo)
    return (dist_r - mean_dir) / np.sqrt(var_dir) * np.sqrt(var_geo) + mean_geo


def pair_distances(a, b):
    ends_a = (a.top, a.bottom)
    ends_b = (b.top, b.bottom)
    dist_g = np.array([np.hypot(p[0] - q[0], p[1] - q[1]) for p in ends_a for q in ends_b])
    dist_r = np.array(
        [_line_distance(p, b) for p in ends_a] + [_line_distance(q, a) for q in ends_b]
    )
    return PairDistances(dist_g, dist_r, normalize_directional(dist_r, dist_g))


def connection_cost(d):
    return float(np.sum((d.dist_g + d.dist_r_norm) / 2.0) / 4.0)


class _UnionFind:
    def __init__(self, labels):
        self.parent = {k: k for k in labels}

    def find(self, k):
        root = k
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[k] != root:
            self.parent[k], k = root, self.parent[k]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller label wins so roots do not depend on merge order
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def group_supermarkings(marks, threshold):
    """Merge supermarkings whose pairwise cost is below ``threshold``.

    Returns ``{component label: group id}`` with group ids dense from 1 in
    the order of each group's smallest component label.
    """
    if not threshold > 0:
        raise ValueError(f"merge threshold must be positive, got {threshold}")
    uf = _UnionFind([m.label for m in marks])
    for i, a in enumerate(marks):
        for b in marks[i + 1:]:
            if connection_cost(pair_distances(a, b)) < threshold:
                uf.union(a.label, b.label)
    groups = {}
    mapping = {}
    for m in sorted(marks, key=lambda m: m.label):
        root = uf.find(m.label)
        mapping[m.label] = groups.setdefault(root, len(groups) + 1)
    return mapping


def relabel(label_map, mapping):
    """Apply a component -> group mapping to a component label map (0 stays 0)."""
    label_map = np.asarray(label_map)
    lut = np.zeros(int(label_map.max(initial=0)) + 1, dtype=np.int64)
    for comp, group in mapping.items():
        lut[comp] = group
    return lut[label_map]
