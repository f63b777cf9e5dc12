"""Square-mask erasure and the sliding-window mask grid.

Masks are square regions set to intensity zero. Training erases one mask at
a random location; localization enumerates masks on a regular stride.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagedata import as_slice


@dataclass(frozen=True)
class MaskWindow:
    """A square mask placement: top-left corner plus side length."""
    x0: int
    y0: int
    gamma: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"window origin must be nonnegative, got ({self.x0}, {self.y0})")
        if self.gamma < 1:
            raise ValueError(f"window side must be >= 1, got {self.gamma}")


@dataclass(frozen=True)
class WindowGrid:
    """Row-major sequence of windows produced by the sliding-window scan."""
    windows: tuple
    step: int

    def __len__(self):
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


def _check_in_bounds(window: MaskWindow, h: int, w: int) -> None:
    if window.x0 + window.gamma > w or window.y0 + window.gamma > h:
        raise ValueError(
            f"window ({window.x0}, {window.y0}, gamma={window.gamma}) exceeds slice bounds {w}x{h}"
        )


def apply_mask(slice_, window: MaskWindow) -> np.ndarray:
    """Erase the window region to zero; all other pixels are untouched."""
    arr = as_slice(slice_)
    h, w = arr.shape
    _check_in_bounds(window, h, w)
    out = arr.copy()
    out[window.y0:window.y0 + window.gamma, window.x0:window.x0 + window.gamma] = 0.0
    return out


def random_mask(slice_, gamma: int, rng: np.random.Generator):
    """Erase a gamma-sized square at an origin drawn uniformly over all
    in-bounds placements. Returns (masked slice, window)."""
    arr = as_slice(slice_)
    h, w = arr.shape
    if gamma > min(w, h):
        raise ValueError(f"gamma={gamma} larger than slice {w}x{h}")
    x0 = int(rng.integers(0, w - gamma + 1))
    y0 = int(rng.integers(0, h - gamma + 1))
    window = MaskWindow(x0, y0, gamma)
    return apply_mask(arr, window), window


def _axis_origins(dim: int, gamma: int, k: int):
    # multiples of k while the window stays in-bounds, plus a final origin
    # flush with the far edge when the stride does not land there
    last = dim - gamma
    origins = list(range(0, last + 1, k))
    if origins[-1] != last:
        origins.append(last)
    return origins


def windows(width: int, height: int, gamma: int, k: int) -> WindowGrid:
    """Enumerate all sliding-window placements in row-major order."""
    if gamma < 1 or gamma > width or gamma > height:
        raise ValueError(f"invalid gamma={gamma} for {width}x{height}")
    if k < 1:
        raise ValueError(f"step k must be >= 1, got {k}")
    xs = _axis_origins(width, gamma, k)
    ys = _axis_origins(height, gamma, k)
    grid = tuple(MaskWindow(x, y, gamma) for y in ys for x in xs)
    return WindowGrid(windows=grid, step=k)
