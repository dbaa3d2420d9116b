"""Detection flow: labels -> lane groups -> cubic models -> overlay and report."""
from dataclasses import dataclass, field

import numpy as np

from . import fitting, grouping
from .errors import ContractError

# class ids of the three-class lane setup
CLASS_OTHER, CLASS_ROAD, CLASS_LANE = 0, 1, 2

PALETTE = (
    (255, 0, 0), (0, 255, 0), (0, 128, 255), (255, 255, 0),
    (255, 0, 255), (0, 255, 255), (255, 128, 0), (128, 0, 255),
)


@dataclass
class PostprocessConfig:
    lane_class_id: int = CLASS_LANE
    connectivity: int = grouping.DEFAULT_CONNECTIVITY
    min_pixels: int = grouping.DEFAULT_MIN_PIXELS
    merge_threshold: float = None  # None -> 5% of the image diagonal
    blocks: int = fitting.DEFAULT_BLOCKS

    def validate(self):
        if self.connectivity not in (4, 8):
            raise ContractError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.min_pixels < 1:
            raise ContractError(f"min_pixels must be >= 1, got {self.min_pixels}")
        if self.merge_threshold is not None and not self.merge_threshold > 0:
            raise ContractError(f"merge threshold must be positive, got {self.merge_threshold}")
        if self.blocks < 1:
            raise ContractError(f"blocks must be >= 1, got {self.blocks}")


@dataclass
class Lane:
    group_id: int
    model: fitting.LaneModel
    candidates: list


@dataclass
class PostprocessResult:
    component_map: np.ndarray
    supermarkings: list
    group_map: np.ndarray
    lanes: list = field(default_factory=list)
    threshold: float = 0.0


def postprocess(labels, config=None):
    config = config or PostprocessConfig()
    config.validate()
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ContractError(f"label map must be 2-D, got shape {labels.shape}")
    threshold = config.merge_threshold
    if threshold is None:
        threshold = grouping.default_threshold(labels.shape)
    mask = grouping.extract_lane_mask(labels, config.lane_class_id)
    comp_map, marks = grouping.connected_components(mask, config.connectivity, config.min_pixels)
    mapping = grouping.group_supermarkings(marks, threshold)
    group_map = grouping.relabel(comp_map, mapping)
    lanes = []
    for gid in range(1, max(mapping.values(), default=0) + 1):
        cands = fitting.block_candidates(group_map, gid, config.blocks)
        lanes.append(Lane(gid, fitting.fit_cubic(cands), cands))
    return PostprocessResult(comp_map, marks, group_map, lanes, threshold)


def format_report(result):
    lines = [
        f"supermarkings: {len(result.supermarkings)}",
        f"merge_threshold: {result.threshold:.6f}",
        f"groups: {len(result.lanes)}",
        "# group a b c d degree residual",
    ]
    for lane in result.lanes:
        m = lane.model
        lines.append(
            f"{lane.group_id} {m.a:.12e} {m.b:.12e} {m.c:.12e} {m.d:.12e} {m.degree} {m.residual:.6e}"
        )
    return "\n".join(lines) + "\n"


def _line(r0, c0, r1, c1):
    """Integer Bresenham line from (r0, c0) to (r1, c1), endpoints included."""
    dr, dc = abs(r1 - r0), -abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr + dc
    while True:
        yield r0, c0
        if r0 == r1 and c0 == c1:
            return
        e2 = 2 * err
        if e2 >= dc:
            err += dc
            r0 += sr
        if e2 <= dr:
            err += dr
            c0 += sc


def render_overlay(image, result):
    """Tint grouped lane pixels and draw each fitted lane as a polyline."""
    out = np.array(image, dtype=np.uint8, copy=True)
    h, w = out.shape[:2]
    for lane in result.lanes:
        color = np.array(PALETTE[(lane.group_id - 1) % len(PALETTE)], dtype=np.uint16)
        sel = result.group_map == lane.group_id
        out[sel] = ((out[sel].astype(np.uint16) + color) // 2).astype(np.uint8)
    for lane in result.lanes:
        color = PALETTE[(lane.group_id - 1) % len(PALETTE)]
        lo, hi = lane.model.domain
        rows = range(int(np.ceil(lo)), int(np.floor(hi)) + 1) or [round(lo)]
        pts = [(int(p.row), int(round(p.col))) for p in fitting.evaluate_lane(lane.model, rows)]
        for (r0, c0), (r1, c1) in zip(pts, pts[1:] or pts):
            if max(abs(c0), abs(c1)) > 4 * w:
                continue
            for r, c in _line(r0, c0, r1, c1):
                if 0 <= r < h and 0 <= c < w:
                    out[r, c] = color
    return out


def image_to_tensor(image):
    """(H, W, 3) uint8 -> (1, 3, H, W) float32 scaled to [0, 1]."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractError(f"expected an RGB image, got shape {image.shape}")
    return (image.transpose(2, 0, 1)[None].astype(np.float32) / np.float32(255))
