"""Connected-component symbol segmentation.

Images follow the ink convention: 0 is background, larger values are ink.
Bounding boxes are inclusive ``(x_min, y_min, x_max, y_max)`` tuples.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

PATCH_SIZE = 30
DEFAULT_THRESHOLD = 127
DEFAULT_MERGE_OVERLAP = 0.5

Box = tuple[int, int, int, int]


@dataclass
class ComponentMap:
    labels: np.ndarray
    count: int

    def bboxes(self) -> list[Box]:
        boxes = []
        for k in range(1, self.count + 1):
            ys, xs = np.nonzero(self.labels == k)
            boxes.append((int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())))
        return boxes


@dataclass
class SymbolPatch:
    bitmap: np.ndarray  # PATCH_SIZE × PATCH_SIZE float64 intensities
    bbox: Box
    order_index: int


@dataclass
class PatchResult:
    patches: list[SymbolPatch] = field(default_factory=list)
    skipped: int = 0


def binarize(img: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold {threshold} outside [0, 255]")
    return (np.asarray(img) > threshold).astype(np.uint8)


def _row_runs(row: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([0], row.astype(np.int8), [0]))
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def connected_components(binary: np.ndarray) -> ComponentMap:
    """8-connected labeling, labels numbered in first-encounter raster order.

    Two-pass union-find over horizontal runs: a run joins every run in the
    previous row whose column span touches ``[start-1, end+1]``.
    """
    binary = np.asarray(binary) != 0
    h, w = binary.shape
    parent: list[int] = []

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    runs: list[tuple[int, int, int]] = []  # (row, start, end)
    prev: list[int] = []
    for y in range(h):
        cur = []
        row_runs = _row_runs(binary[y])
        j = 0
        for s, e in row_runs:
            rid = len(runs)
            runs.append((y, s, e))
            parent.append(rid)
            # previous-row runs are sorted; skip those ending before s-1
            while j < len(prev) and runs[prev[j]][2] < s - 1:
                j += 1
            k = j
            while k < len(prev) and runs[prev[k]][1] <= e + 1:
                ra, rb = find(rid), find(prev[k])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
                k += 1
            cur.append(rid)
        prev = cur

    labels = np.zeros((h, w), dtype=np.int32)
    root_label: dict[int, int] = {}
    for rid, (y, s, e) in enumerate(runs):
        r = find(rid)
        if r not in root_label:
            root_label[r] = len(root_label) + 1
        labels[y, s:e + 1] = root_label[r]
    return ComponentMap(labels, len(root_label))


def _overlap_ratio(a: Box, b: Box) -> float:
    inter = min(a[2], b[2]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    return inter / min(a[2] - a[0] + 1, b[2] - b[0] + 1)


def merge_boxes(boxes: list[Box], min_overlap: float = DEFAULT_MERGE_OVERLAP) -> list[Box]:
    """Transitively merge boxes whose horizontal overlap ratio exceeds ``min_overlap``."""
    n = len(boxes)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if _overlap_ratio(boxes[i], boxes[j]) > min_overlap:
                parent[find(j)] = find(i)
    groups: dict[int, Box] = {}
    for i, b in enumerate(boxes):
        r = find(i)
        g = groups.get(r)
        groups[r] = b if g is None else (min(g[0], b[0]), min(g[1], b[1]), max(g[2], b[2]), max(g[3], b[3]))
    return list(groups.values())


def merge_fragments(cmap: ComponentMap, min_overlap: float = DEFAULT_MERGE_OVERLAP) -> list[Box]:
    return merge_boxes(cmap.bboxes(), min_overlap)


def order_symbols(boxes: list[Box]) -> list[Box]:
    return sorted(boxes, key=lambda b: (b[0], b[1], b[2], b[3]))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centres; same-size input is returned unchanged."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis(h, out_h)
    x0, x1, fx = axis(w, out_w)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def extract_patches(img: np.ndarray, boxes: list[Box], size: int = PATCH_SIZE) -> PatchResult:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    result = PatchResult()
    for box in boxes:
        x0, y0, x1, y1 = box
        if x1 < x0 or y1 < y0:
            result.skipped += 1
            continue
        if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
            raise ValueError(f"box {box} outside image of size {w}×{h}")
        crop = img[y0:y1 + 1, x0:x1 + 1]
        bitmap = resize_bilinear(crop, size, size)
        result.patches.append(SymbolPatch(bitmap, box, len(result.patches)))
    if result.skipped:
        log.warning("skipped %d empty boxes", result.skipped)
    return result


def segment(img: np.ndarray, threshold: float = DEFAULT_THRESHOLD,
            min_overlap: float = DEFAULT_MERGE_OVERLAP) -> list[SymbolPatch]:
    """Whole pipeline: binarize, label, merge fragments, order, crop and resize."""
    cmap = connected_components(binarize(img, threshold))
    boxes = order_symbols(merge_fragments(cmap, min_overlap))
    return extract_patches(img, boxes).patches
