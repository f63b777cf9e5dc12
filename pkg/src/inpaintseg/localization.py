"""Sliding-window inference producing the reconstruction-loss heatmap.

Every window placement erases its square from the query slice, the
network reconstructs the full slice, both the query and the reconstruction
are minmax-normalized to [0, 255], and the mean absolute difference over
the window patch alone is accumulated into every pixel the window covers.
The final heatmap is the per-pixel mean over all covering windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagedata import as_slice, from_unit_range, minmax_normalize, to_unit_range
from .masking import MaskWindow, apply_mask, windows
from .network import ModelCheckpoint, generator_forward


@dataclass
class Heatmap:
    """Per-pixel reconstruction-loss field plus window coverage counts."""
    values: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.coverage = np.asarray(self.coverage, dtype=np.int64)
        if self.values.shape != self.coverage.shape:
            raise ValueError("values/coverage shapes differ")


def window_loss(original, reconstructed, window: MaskWindow) -> float:
    """Mean absolute difference over the window patch of two normalized slices."""
    x = as_slice(original)
    r = as_slice(reconstructed)
    if x.shape != r.shape:
        raise ValueError(f"slice shapes differ: {x.shape} vs {r.shape}")
    h, w = x.shape
    if window.x0 + window.gamma > w or window.y0 + window.gamma > h:
        raise ValueError(f"window {window} exceeds slice bounds {w}x{h}")
    ys = slice(window.y0, window.y0 + window.gamma)
    xs = slice(window.x0, window.x0 + window.gamma)
    return float(np.mean(np.abs(x[ys, xs] - r[ys, xs])))


def make_reconstructor(generator):
    """Wrap a generator as a [0, 255]-space batch reconstructor."""
    def reconstruct(masked_batch: np.ndarray) -> np.ndarray:
        unit = np.stack([to_unit_range(m) for m in masked_batch])
        return np.stack([from_unit_range(r) for r in generator_forward(generator, unit)])
    return reconstruct


def perfect_reconstructor(slice_):
    """Oracle reconstructor restoring the query slice exactly (test hook)."""
    arr = as_slice(slice_)
    def reconstruct(masked_batch: np.ndarray) -> np.ndarray:
        return np.repeat(arr[None, :, :], len(masked_batch), axis=0)
    return reconstruct


def build_heatmap(slice_, reconstruct, gamma: int, k: int, batch_size: int = 64) -> Heatmap:
    """Accumulate per-window losses over the row-major sliding-window grid.

    ``reconstruct`` maps a batch of masked slices in [0, 255] to
    reconstructions in [0, 255]. Windows are processed in fixed row-major
    order, in batches whose result must equal the one-at-a-time reference.
    """
    arr = as_slice(slice_)
    h, w = arr.shape
    grid = windows(w, h, gamma, k)
    x_norm = minmax_normalize(arr)
    sums = np.zeros((h, w), dtype=np.float64)
    coverage = np.zeros((h, w), dtype=np.int64)

    grid_list = list(grid)
    for start in range(0, len(grid_list), batch_size):
        chunk = grid_list[start:start + batch_size]
        masked = np.stack([apply_mask(arr, win) for win in chunk])
        recon = reconstruct(masked)
        if recon.shape != masked.shape:
            raise ValueError(f"reconstructor returned shape {recon.shape}, expected {masked.shape}")
        for win, rec in zip(chunk, recon):
            r_norm = minmax_normalize(rec)
            loss = window_loss(x_norm, r_norm, win)
            ys = slice(win.y0, win.y0 + win.gamma)
            xs = slice(win.x0, win.x0 + win.gamma)
            sums[ys, xs] += loss
            coverage[ys, xs] += 1

    values = np.divide(sums, coverage, out=np.zeros_like(sums), where=coverage > 0)
    return Heatmap(values=values, coverage=coverage)


def build_heatmap_from_checkpoint(slice_, ckpt: ModelCheckpoint, k: int,
                                  batch_size: int = 64) -> Heatmap:
    """Build the heatmap for a query slice with a persisted model."""
    arr = as_slice(slice_)
    h, w = arr.shape
    if ckpt.gamma > min(h, w):
        raise ValueError(f"checkpoint gamma={ckpt.gamma} larger than slice {w}x{h}")
    if ckpt.kind == "identity":
        reconstruct = perfect_reconstructor(arr)
    else:
        spec = ckpt.g_spec
        if (h, w) != (spec.height, spec.width):
            raise ValueError(
                f"slice {w}x{h} does not match checkpoint input size "
                f"{spec.width}x{spec.height}"
            )
        reconstruct = make_reconstructor(ckpt.build_generator())
    return build_heatmap(arr, reconstruct, ckpt.gamma, k, batch_size)


def heatmap_to_image(heatmap: Heatmap) -> np.ndarray:
    """Minmax-normalize heatmap values to [0, 255] for export."""
    return minmax_normalize(heatmap.values)


def write_pfm(path, values) -> None:
    """Write a 2D float array as a little-endian portable float map."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"PFM expects a 2D array, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        # PFM stores rows bottom-to-top
        fh.write(arr[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM file")
        w, h = (int(t) for t in fh.readline().split())
        scale = float(fh.readline())
        data = fh.read(w * h * 4)
    if len(data) != w * h * 4:
        raise ValueError(f"{path}: truncated PFM payload")
    endian = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=endian).reshape(h, w)
    return np.asarray(arr[::-1], dtype=np.float64)


def save_heatmap(heatmap: Heatmap, path, gamma: int, k: int, checkpoint_digest: str) -> None:
    """Persist heatmap values as PFM with an adjacent plain-text metadata file."""
    write_pfm(path, heatmap.values)
    with open(f"{path}.meta", "w") as fh:
        fh.write(f"gamma={gamma}\n")
        fh.write(f"k={k}\n")
        fh.write(f"checkpoint_digest={checkpoint_digest}\n")


def load_heatmap(path):
    """Read PFM values and the sidecar metadata written by save_heatmap."""
    values = read_pfm(path)
    meta = {}
    with open(f"{path}.meta") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            meta[key] = value
    return values, meta
