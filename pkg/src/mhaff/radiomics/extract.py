"""Full radiomics vector: 7 families x 4 regions around one nodule.

Regions are the three centered cubes (sides 16/32/48 voxels) and the
whole-lung mask. Cube regions use every voxel (mask all true); the lung
region uses the segmented mask on the resampled volume. Values that a
family cannot produce for a region (degenerate geometry, no co-occurring
pair) become None sentinels rather than aborting the vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyForeground, EmptyMask, NoValidPairs
from ..preprocess import CUBE_SIDES, LungMask, NoduleCube, extract_cubes
from ..volume_io import NoduleAnnotation, Volume
from . import firstorder, shape, texture
from .firstorder import FIRSTORDER_NAMES
from .quantize import DEFAULT_BINS, quantize
from .shape import SHAPE_NAMES, pseudo_segment
from .texture import GLCM_NAMES, GLDM_NAMES, GLRLM_NAMES, GLSZM_NAMES, NGTDM_NAMES

REGION_NAMES = ("cube16", "cube32", "cube48", "lung")

FAMILY_NAMES = {
    "firstorder": FIRSTORDER_NAMES,
    "shape": SHAPE_NAMES,
    "glcm": GLCM_NAMES,
    "glrlm": GLRLM_NAMES,
    "glszm": GLSZM_NAMES,
    "gldm": GLDM_NAMES,
    "ngtdm": NGTDM_NAMES,
}

FAMILY_ORDER = ("firstorder", "shape", "glcm", "glrlm", "glszm", "gldm", "ngtdm")

FEATURES_PER_REGION = sum(len(v) for v in FAMILY_NAMES.values())  # 76


def feature_names() -> list[str]:
    """The fixed 304-entry schema: {region}_{family}_{feature}."""
    names = []
    for region in REGION_NAMES:
        for family in FAMILY_ORDER:
            for feat in FAMILY_NAMES[family]:
                names.append(f"{region}_{family}_{feat}")
    return names


@dataclass
class FeatureVectorRaw:
    nodule_id: str
    patient_id: str
    names: list[str]
    values: list[float | None]
    label: int


def _region_features(hu_values: np.ndarray, mask: np.ndarray,
                     spacing: tuple[float, float, float],
                     shape_mask: np.ndarray | None,
                     n_bins: int) -> dict[str, float | None]:
    """All 76 family features for one region; failures become None."""
    out: dict[str, float | None] = {}
    voxel_volume = float(spacing[0] * spacing[1] * spacing[2])

    values = hu_values[mask].astype(np.float64)
    fo = firstorder.first_order(values, voxel_volume=voxel_volume, n_bins=n_bins)
    for name in FIRSTORDER_NAMES:
        out[f"firstorder_{name}"] = fo[name]

    if shape_mask is not None and shape_mask.any():
        sh = shape.shape_features(shape_mask, spacing)
        for name in SHAPE_NAMES:
            out[f"shape_{name}"] = sh[name]
    else:
        for name in SHAPE_NAMES:
            out[f"shape_{name}"] = None

    region = quantize(hu_values, mask, n_bins=n_bins)
    family_fns = (
        ("glcm", GLCM_NAMES, texture.glcm_features),
        ("glrlm", GLRLM_NAMES, texture.glrlm_features),
        ("glszm", GLSZM_NAMES, texture.glszm_features),
        ("gldm", GLDM_NAMES, texture.gldm_features),
        ("ngtdm", NGTDM_NAMES, texture.ngtdm_features),
    )
    for family, names, fn in family_fns:
        try:
            feats = fn(region)
        except (NoValidPairs, EmptyMask):
            feats = {name: None for name in names}
        for name in names:
            out[f"{family}_{name}"] = feats[name]
    return out


def extract_all(volume: Volume, annotation: NoduleAnnotation,
                lung_mask: LungMask, n_bins: int = DEFAULT_BINS) -> FeatureVectorRaw:
    """Compute the full 304-feature vector for one annotated nodule.

    `volume` must already be resampled to isotropic spacing; HU values
    are used as-is (no intensity normalization before quantization).
    """
    cubes = extract_cubes(volume, annotation, CUBE_SIDES)
    values: dict[str, float | None] = {}

    for cube in cubes:
        region_name = f"cube{cube.side}"
        mask = np.ones(cube.voxels.shape, dtype=bool)
        try:
            seg = pseudo_segment(cube.voxels)
        except EmptyForeground:
            seg = None
        feats = _region_features(cube.voxels, mask, volume.spacing, seg, n_bins)
        for key, val in feats.items():
            values[f"{region_name}_{key}"] = val

    lung = lung_mask.mask
    if not lung.any():
        raise EmptyMask("lung mask has no voxels")
    # bounding-box crop keeps the texture builders off the empty border
    coords = np.argwhere(lung)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0) + 1
    sub_hu = volume.voxels[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]].astype(np.float64)
    sub_mask = lung[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    feats = _region_features(sub_hu, sub_mask, volume.spacing, sub_mask, n_bins)
    for key, val in feats.items():
        values[f"lung_{key}"] = val

    names = feature_names()
    ordered = [values[name] for name in names]
    return FeatureVectorRaw(
        nodule_id=annotation.nodule_id,
        patient_id=annotation.patient_id,
        names=names,
        values=ordered,
        label=annotation.label,
    )
