"""Graph-based superpixel segmentation and heatmap-driven segment selection.

The segmentation follows Felzenszwalb and Huttenlocher's efficient
graph-based method on the 8-connected pixel grid: edges weighted by absolute
intensity difference are processed in ascending order and two components
merge when the connecting weight does not exceed
``min(Int(C1) + scale/|C1|, Int(C2) + scale/|C2|)``, where ``Int`` is the
largest edge weight in the component's minimum spanning subtree. A final
pass absorbs components smaller than ``min_size`` into their nearest
neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .imagedata import as_slice


@dataclass(frozen=True)
class SegmentationParams:
    scale: float = 75.0
    smoothing_sigma: float = 0.8
    min_size: int = 20

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.smoothing_sigma < 0:
            raise ValueError(f"smoothing_sigma must be >= 0, got {self.smoothing_sigma}")
        if self.min_size < 1:
            raise ValueError(f"min_size must be >= 1, got {self.min_size}")


class _UnionFind:
    """Disjoint-set forest with rank union, size and internal-difference tracking."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.internal = np.zeros(n, dtype=np.float64)

    def find(self, x: int) -> int:
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int, weight: float) -> int:
        # edges arrive in ascending order, so the merging weight is the
        # largest edge in the union's minimum spanning subtree
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        self.size[a] += self.size[b]
        self.internal[a] = weight
        return a


def grid_edges(h: int, w: int):
    """8-connectivity edges as (source, target, axis offsets), source < target.

    Returns (sources, targets) index arrays over row-major pixel ids.
    """
    ids = np.arange(h * w, dtype=np.int64).reshape(h, w)
    pairs = []
    if w > 1:
        pairs.append((ids[:, :-1], ids[:, 1:]))          # right
    if h > 1:
        pairs.append((ids[:-1, :], ids[1:, :]))          # down
    if h > 1 and w > 1:
        pairs.append((ids[:-1, :-1], ids[1:, 1:]))       # down-right
        pairs.append((ids[:-1, 1:], ids[1:, :-1]))       # down-left
    if not pairs:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    src = np.concatenate([p[0].ravel() for p in pairs])
    dst = np.concatenate([p[1].ravel() for p in pairs])
    return src, dst


def smooth(slice_, sigma: float) -> np.ndarray:
    """Gaussian pre-smoothing shared by the fast and reference paths."""
    arr = as_slice(slice_)
    if sigma > 0:
        arr = gaussian_filter(arr, sigma)
    return arr


def _relabel_row_major(roots: np.ndarray) -> np.ndarray:
    labels = np.empty_like(roots)
    mapping = {}
    for i, r in enumerate(roots):
        if r not in mapping:
            mapping[r] = len(mapping)
        labels[i] = mapping[r]
    return labels


def felzenszwalb(slice_, params: SegmentationParams) -> np.ndarray:
    """Segment a slice into superpixels; returns an int label map (H, W).

    Labels are contiguous from 0 in order of first row-major occurrence, so
    identical inputs always produce the identical label map.
    """
    img = smooth(slice_, params.smoothing_sigma)
    h, w = img.shape
    n = h * w
    flat = img.ravel()

    src, dst = grid_edges(h, w)
    uf = _UnionFind(n)
    if len(src) > 0:
        weights = np.abs(flat[src] - flat[dst])
        # total order (weight, source, target) keeps merges deterministic
        order = np.lexsort((dst, src, weights))
        src, dst, weights = src[order], dst[order], weights[order]

        scale = float(params.scale)
        for a, b, wgt in zip(src.tolist(), dst.tolist(), weights.tolist()):
            ra = uf.find(a)
            rb = uf.find(b)
            if ra == rb:
                continue
            ta = uf.internal[ra] + scale / uf.size[ra]
            tb = uf.internal[rb] + scale / uf.size[rb]
            if wgt <= min(ta, tb):
                uf.union(ra, rb, wgt)

        if params.min_size > 1:
            for a, b in zip(src.tolist(), dst.tolist()):
                ra = uf.find(a)
                rb = uf.find(b)
                if ra == rb:
                    continue
                if uf.size[ra] < params.min_size or uf.size[rb] < params.min_size:
                    uf.union(ra, rb, 0.0)

    roots = np.fromiter((uf.find(i) for i in range(n)), dtype=np.int64, count=n)
    return _relabel_row_major(roots).reshape(h, w).astype(np.int32)


def segment_scores(labels, heatmap_values) -> dict:
    """Mean heatmap value per segment label."""
    labels = np.asarray(labels)
    values = np.asarray(heatmap_values, dtype=np.float64)
    if labels.shape != values.shape:
        raise ValueError(f"label/heatmap shapes differ: {labels.shape} vs {values.shape}")
    flat = labels.ravel()
    sums = np.bincount(flat, weights=values.ravel())
    counts = np.bincount(flat)
    means = sums / np.maximum(counts, 1)
    return {int(lbl): float(means[lbl]) for lbl in range(len(counts)) if counts[lbl] > 0}


def select_segment(labels, heatmap_values) -> np.ndarray:
    """Binary mask of the segment with the highest mean heatmap value.

    Ties go to the lowest label index.
    """
    scores = segment_scores(labels, heatmap_values)
    best = max(sorted(scores), key=lambda lbl: scores[lbl])
    # max() keeps the first (lowest) label on ties because the candidates
    # are visited in ascending label order
    return np.asarray(labels) == best


def save_label_map(labels, path) -> None:
    """Export a label map as 16-bit grayscale PNG for debugging."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("labels out of 16-bit range")
    Image.fromarray(labels.astype(np.uint16)).save(path)
