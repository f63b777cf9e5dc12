"""Synthetic grayscale dataset with ground-truth anomaly masks.

Stands in for clinical data at desk scale: every slice is a centered
ellipse of smooth low-frequency texture on a black background, and an
anomalous slice additionally carries one bright high-frequency disc that is
out of distribution for a network trained on normal slices only. Normal and
anomalous slices share the identical background/texture process; the
injected disc is the only difference.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import imagedata

TISSUE_BASE = 125.0
TISSUE_AMPLITUDE = 32.0
TISSUE_LO, TISSUE_HI = 45.0, 195.0
TEXTURE_SIGMA = 4.0
ANOMALY_BASE = 225.0
ANOMALY_JITTER = 25.0


@dataclass(frozen=True)
class SynthSpec:
    width: int = 64
    height: int = 64
    n_normal: int = 0
    n_anomalous: int = 0
    radius_min: float = 6.0
    radius_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_normal < 0 or self.n_anomalous < 0:
            raise ValueError("sample counts must be >= 0")
        if self.radius_min > self.radius_max:
            raise ValueError("radius_min must not exceed radius_max")
        ax, ay = self.ellipse_axes()
        if self.radius_max >= min(ax, ay) - 2:
            raise ValueError(
                f"anomaly radius {self.radius_max} does not fit inside the "
                f"foreground ellipse (semi-axes {ax:.1f}, {ay:.1f})"
            )

    def ellipse_axes(self):
        return 0.40 * self.width, 0.44 * self.height

    def foreground(self) -> np.ndarray:
        """Boolean mask of the elliptical 'brain' region."""
        ax, ay = self.ellipse_axes()
        cy, cx = (self.height - 1) / 2.0, (self.width - 1) / 2.0
        yy, xx = np.mgrid[0:self.height, 0:self.width]
        return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0


def _normal_slice(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(size=(spec.height, spec.width))
    low = gaussian_filter(noise, TEXTURE_SIGMA)
    low = (low - low.mean()) / low.std()
    tissue = np.clip(TISSUE_BASE + TISSUE_AMPLITUDE * low, TISSUE_LO, TISSUE_HI)
    out = np.where(spec.foreground(), tissue, 0.0)
    return out


def gen_normal(spec: SynthSpec, rng: np.random.Generator):
    """Generate ``spec.n_normal`` healthy slices, one derived rng stream each."""
    return [_normal_slice(spec, child) for child in rng.spawn(spec.n_normal)]


def _inject_anomaly(spec: SynthSpec, base: np.ndarray, rng: np.random.Generator):
    ax, ay = spec.ellipse_axes()
    cy0, cx0 = (spec.height - 1) / 2.0, (spec.width - 1) / 2.0
    radius = float(rng.uniform(spec.radius_min, spec.radius_max))
    while True:
        cx = int(rng.integers(0, spec.width))
        cy = int(rng.integers(0, spec.height))
        # disc fully inside the ellipse, with a one-pixel margin
        if ((cx - cx0) / (ax - radius - 1)) ** 2 + ((cy - cy0) / (ay - radius - 1)) ** 2 <= 1.0:
            break
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    blob = np.clip(ANOMALY_BASE + rng.uniform(-ANOMALY_JITTER, ANOMALY_JITTER, size=base.shape), 0, 255)
    out = np.where(mask, blob, base)
    return out, mask


def gen_anomalous(spec: SynthSpec, rng: np.random.Generator):
    """Generate ``spec.n_anomalous`` (slice, truth mask) pairs.

    Each slice is produced by the normal-texture process and then one bright
    high-frequency disc is injected fully inside the foreground.
    """
    out = []
    for child in rng.spawn(spec.n_anomalous):
        base = _normal_slice(spec, child)
        out.append(_inject_anomaly(spec, base, child))
    return out


@dataclass(frozen=True)
class ManifestEntry:
    filename: str
    label: str          # "normal" or "anomalous"
    mask_filename: str  # empty for normal samples


def write_dataset(spec: SynthSpec, out_dir) -> str:
    """Write images plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    entries = []
    for i, slice_ in enumerate(gen_normal(spec, rng)):
        name = f"normal_{i:04d}.png"
        imagedata.save_slice(slice_, os.path.join(out_dir, name))
        entries.append(ManifestEntry(name, "normal", ""))
    for i, (slice_, mask) in enumerate(gen_anomalous(spec, rng)):
        name = f"anom_{i:04d}.png"
        mask_name = f"anom_{i:04d}_mask.png"
        imagedata.save_slice(slice_, os.path.join(out_dir, name))
        imagedata.save_slice(mask.astype(np.float64) * 255.0, os.path.join(out_dir, mask_name))
        entries.append(ManifestEntry(name, "anomalous", mask_name))
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label", "mask"])
        for e in entries:
            writer.writerow([e.filename, e.label, e.mask_filename])
    return manifest


def read_manifest(path):
    """Parse a dataset manifest into a list of ManifestEntry."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["filename", "label", "mask"]:
            raise ValueError(f"{path}: not a dataset manifest")
        for row in reader:
            if len(row) != 3:
                raise ValueError(f"{path}: malformed manifest row {row!r}")
            if row[1] not in ("normal", "anomalous"):
                raise ValueError(f"{path}: unknown label {row[1]!r}")
            entries.append(ManifestEntry(row[0], row[1], row[2]))
    return entries
