"""Size and shape features of a binary foreground (10 per region).

Surface area follows the exposed-voxel-face convention; axis lengths
come from the eigen-decomposition of the physical coordinate covariance.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from ..errors import EmptyForeground

SHAPE_NAMES = [
    "volume", "surface_area", "surface_volume_ratio", "sphericity",
    "compactness", "max_diameter", "major_axis", "minor_axis",
    "elongation", "flatness",
]

PSEUDO_SEG_THRESHOLD_HU = -400.0

_RANK_TOL = 1e-9


def pseudo_segment(cube_hu: np.ndarray,
                   threshold: float = PSEUDO_SEG_THRESHOLD_HU) -> np.ndarray:
    """Foreground for shape features of a nodule cube.

    Threshold above soft-tissue, keep the largest 6-connected component.
    """
    fg = np.asarray(cube_hu) > threshold
    if not fg.any():
        raise EmptyForeground("no voxel above the pseudo-segmentation threshold")
    labels, n = ndimage.label(fg, structure=ndimage.generate_binary_structure(3, 1))
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == counts.argmax()


def _exposed_faces(mask: np.ndarray, axis: int) -> int:
    padded = np.insert(mask, (0, mask.shape[axis]), False, axis=axis)
    a = np.swapaxes(padded, 0, axis)
    return int(np.sum(a[1:] != a[:-1]))


def _max_diameter(points: np.ndarray) -> float:
    """Largest pairwise distance between voxel centers.

    Full pairwise search on small sets; convex-hull vertices otherwise,
    projecting onto the spanned subspace when the set is flat.
    """
    if len(points) == 1:
        return 0.0
    if len(points) <= 1000:
        return float(pdist(points).max())
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    scale = svals[0] if svals[0] > 0 else 1.0
    rank = int(np.sum(svals > scale * _RANK_TOL))
    if rank <= 1:
        proj = centered @ np.linalg.svd(centered, full_matrices=False)[2][0]
        return float(proj.max() - proj.min())
    if rank == 2:
        basis = np.linalg.svd(centered, full_matrices=False)[2][:2]
        flat = centered @ basis.T
        hull = ConvexHull(flat)
        return float(pdist(flat[hull.vertices]).max())
    try:
        hull = ConvexHull(centered)
    except QhullError:
        return float(pdist(centered[::max(1, len(centered) // 1000)]).max())
    return float(pdist(centered[hull.vertices]).max())


def shape_features(mask: np.ndarray,
                   spacing: tuple[float, float, float]) -> dict[str, float | None]:
    """Shape features of a binary mask on a grid with the given spacing."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyForeground("shape features need a nonempty foreground")
    sx, sy, sz = spacing
    voxel_volume = sx * sy * sz
    count = int(mask.sum())
    volume = count * voxel_volume

    face_areas = (sy * sz, sx * sz, sx * sy)
    surface = sum(_exposed_faces(mask, axis) * face_areas[axis] for axis in range(3))

    sphericity = math.pi ** (1.0 / 3.0) * (6.0 * volume) ** (2.0 / 3.0) / surface
    compactness = volume / (math.sqrt(math.pi) * surface ** 1.5)

    points = np.argwhere(mask).astype(np.float64) * np.asarray(spacing)
    max_diameter = _max_diameter(points)

    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / count
    eigvals = np.clip(np.linalg.eigvalsh(cov), 0.0, None)[::-1]  # descending
    major = 4.0 * math.sqrt(eigvals[0])
    minor = 4.0 * math.sqrt(eigvals[1])
    if eigvals[0] > _RANK_TOL:
        elongation = math.sqrt(eigvals[1] / eigvals[0])
        flatness = math.sqrt(eigvals[2] / eigvals[0])
    else:
        elongation = None
        flatness = None

    return {
        "volume": volume,
        "surface_area": surface,
        "surface_volume_ratio": surface / volume,
        "sphericity": sphericity,
        "compactness": compactness,
        "max_diameter": max_diameter,
        "major_axis": major,
        "minor_axis": minor,
        "elongation": elongation,
        "flatness": flatness,
    }
