"""Intensity-histogram features (18 per region)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import EmptyMask
from .quantize import DEFAULT_BINS, quantize_values

FIRSTORDER_NAMES = [
    "mean", "variance", "skewness", "kurtosis", "median",
    "minimum", "maximum", "range", "interquartile_range",
    "energy", "total_energy", "entropy",
    "mean_absolute_deviation", "robust_mad", "root_mean_square",
    "uniformity", "p10", "p90",
]

_SIGMA_EPS = 1e-12


def nearest_rank_percentile(sorted_values: np.ndarray, percent: float) -> float:
    """Nearest-rank percentile: value at index ceil(p/100 * N) of the sorted list."""
    n = len(sorted_values)
    rank = max(1, min(n, math.ceil(percent / 100.0 * n)))
    return float(sorted_values[rank - 1])


def first_order(values: np.ndarray, voxel_volume: float = 1.0,
                n_bins: int = DEFAULT_BINS) -> dict[str, float]:
    """Compute the 18 first-order features of the in-mask values.

    Variance is population (biased); entropy and uniformity use the
    region's fixed-bin-count histogram, entropy in bits. Percentiles
    follow the nearest-rank convention.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyMask("first-order features need a nonempty region")
    n = values.size
    mean = float(values.mean())
    variance = float(values.var())
    sigma = math.sqrt(variance)
    centered = values - mean
    if sigma > _SIGMA_EPS:
        skewness = float((centered ** 3).mean() / sigma ** 3)
        kurtosis = float((centered ** 4).mean() / sigma ** 4)
    else:
        skewness = 0.0
        kurtosis = 0.0

    sorted_vals = np.sort(values)
    p10 = nearest_rank_percentile(sorted_vals, 10.0)
    p25 = nearest_rank_percentile(sorted_vals, 25.0)
    p75 = nearest_rank_percentile(sorted_vals, 75.0)
    p90 = nearest_rank_percentile(sorted_vals, 90.0)

    robust = values[(values >= p10) & (values <= p90)]
    robust_mad = float(np.abs(robust - robust.mean()).mean()) if robust.size else 0.0

    levels = quantize_values(values, n_bins)
    counts = np.bincount(levels, minlength=n_bins + 1)[1:]
    probs = counts[counts > 0] / n
    entropy = float(-(probs * np.log2(probs)).sum())
    uniformity = float((probs ** 2).sum())

    energy = float((values ** 2).sum())
    return {
        "mean": mean,
        "variance": variance,
        "skewness": skewness,
        "kurtosis": kurtosis,
        "median": float(np.median(values)),
        "minimum": float(sorted_vals[0]),
        "maximum": float(sorted_vals[-1]),
        "range": float(sorted_vals[-1] - sorted_vals[0]),
        "interquartile_range": p75 - p25,
        "energy": energy,
        "total_energy": energy * voxel_volume,
        "entropy": entropy,
        "mean_absolute_deviation": float(np.abs(centered).mean()),
        "robust_mad": robust_mad,
        "root_mean_square": math.sqrt(energy / n),
        "uniformity": uniformity,
        "p10": p10,
        "p90": p90,
    }
