"""Slice representation, file I/O, padding and intensity normalization.

A slice is a 2D float64 numpy array in row-major (height, width) order
holding one grayscale channel. File I/O works in the 8-bit [0, 255] range;
the networks consume the [0, 1] range via ``to_unit_range``.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

SUPPORTED_SUFFIXES = (".png", ".pgm")


def as_slice(pixels) -> np.ndarray:
    """Validate and return a 2D float64 slice array."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"slice must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"slice must be at least 1x1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("slice contains non-finite intensities")
    return arr


def load_slice(path) -> np.ndarray:
    """Load an 8-bit single-channel PNG or binary PGM as a slice in [0, 255].

    Color or high-bit-depth inputs are rejected rather than converted.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    suffix = os.path.splitext(path)[1].lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format {suffix!r} (expected one of {SUPPORTED_SUFFIXES})")
    with Image.open(path) as img:
        if img.mode != "L":
            raise ValueError(
                f"{path}: expected 8-bit grayscale (mode 'L'), got mode {img.mode!r}; "
                "refusing to convert color or high-bit-depth input"
            )
        arr = np.asarray(img, dtype=np.float64)
    return as_slice(arr)


def save_slice(slice_, path) -> None:
    """Write a slice with intensities in [0, 255] as 8-bit PNG or PGM.

    Intensities are quantized to the nearest integer; a later ``load_slice``
    reproduces the slice up to that quantization.
    """
    arr = as_slice(slice_)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError(
            f"slice intensities must lie in [0, 255] for 8-bit export, got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    path = os.fspath(path)
    suffix = os.path.splitext(path)[1].lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format {suffix!r} (expected one of {SUPPORTED_SUFFIXES})")
    quantized = np.rint(arr).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path)


def save_rgb(rgb, path) -> None:
    """Write an (H, W, 3) array in [0, 255] as an 8-bit RGB PNG."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("RGB intensities must lie in [0, 255]")
    Image.fromarray(np.rint(arr).astype(np.uint8), mode="RGB").save(os.fspath(path))


def minmax_normalize(slice_) -> np.ndarray:
    """Affinely map [min, max] of the slice onto [0, 255].

    A constant slice has no contrast to rescale and maps to all zeros.
    """
    arr = as_slice(slice_)
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) * (255.0 / (hi - lo))


def pad_to(slice_, target_w: int, target_h: int) -> np.ndarray:
    """Center the slice on a black (zero) canvas of the target dimensions."""
    arr = as_slice(slice_)
    h, w = arr.shape
    if target_w < w or target_h < h:
        raise ValueError(f"target {target_w}x{target_h} smaller than slice {w}x{h}")
    top = (target_h - h) // 2
    left = (target_w - w) // 2
    out = np.zeros((target_h, target_w), dtype=np.float64)
    out[top:top + h, left:left + w] = arr
    return out


def crop_center(slice_, width: int, height: int) -> np.ndarray:
    """Inverse of ``pad_to``: cut the centered (height, width) region back out."""
    arr = as_slice(slice_)
    h, w = arr.shape
    if width > w or height > h:
        raise ValueError(f"crop {width}x{height} larger than slice {w}x{h}")
    top = (h - height) // 2
    left = (w - width) // 2
    return arr[top:top + height, left:left + width].copy()


def to_unit_range(slice_) -> np.ndarray:
    """Scale intensities from [0, 255] to [0, 1] for network input."""
    arr = as_slice(slice_)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("expected intensities in [0, 255]")
    return arr / 255.0


def from_unit_range(slice_) -> np.ndarray:
    """Scale intensities from [0, 1] back to [0, 255]."""
    arr = as_slice(slice_)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("expected intensities in [0, 1]")
    return arr * 255.0
