"""Gray-level quantization shared by all texture families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyMask

DEFAULT_BINS = 32
_EPS = 1e-9


@dataclass
class QuantizedRegion:
    """A masked region discretized to integer levels 1..n_levels.

    levels is 0 outside the mask so texture builders can treat 0 as
    "not in region". Arrays are cropped to the mask bounding box.
    """

    levels: np.ndarray  # int32, 0 = outside mask
    mask: np.ndarray    # bool, same shape
    n_levels: int
    hu_min: float
    hu_max: float

    @property
    def n_voxels(self) -> int:
        return int(self.mask.sum())


def quantize_values(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Map values onto integer levels 1..n_bins (fixed bin count).

    level = 1 + floor(G * (v - min) / (max - min + eps)), capped at G.
    A constant input maps entirely to level 1.
    """
    values = np.asarray(values, dtype=np.float64)
    vmin = values.min()
    vmax = values.max()
    if vmax <= vmin:
        return np.ones(values.shape, dtype=np.int32)
    scaled = n_bins * (values - vmin) / (vmax - vmin + _EPS)
    return np.minimum(1 + np.floor(scaled).astype(np.int32), n_bins)


def quantize(values: np.ndarray, mask: np.ndarray,
             n_bins: int = DEFAULT_BINS) -> QuantizedRegion:
    """Quantize a masked 3D region, cropping to the mask bounding box."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot quantize an empty region")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != mask.shape:
        raise ValueError(f"values {values.shape} vs mask {mask.shape}")

    coords = np.argwhere(mask)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0) + 1
    box = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
    values = values[box]
    mask = mask[box]

    in_mask = values[mask]
    vmin = float(in_mask.min())
    vmax = float(in_mask.max())
    levels = np.zeros(values.shape, dtype=np.int32)
    levels[mask] = quantize_values(in_mask, n_bins)
    return QuantizedRegion(levels=levels, mask=mask, n_levels=n_bins,
                           hu_min=vmin, hu_max=vmax)
