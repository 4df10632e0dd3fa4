"""Hand-crafted radiomics: quantization, 7 feature families, assembly."""

from .extract import (
    FAMILY_NAMES,
    FAMILY_ORDER,
    FEATURES_PER_REGION,
    REGION_NAMES,
    FeatureVectorRaw,
    extract_all,
    feature_names,
)
from .firstorder import FIRSTORDER_NAMES, first_order, nearest_rank_percentile
from .quantize import DEFAULT_BINS, QuantizedRegion, quantize, quantize_values
from .shape import SHAPE_NAMES, pseudo_segment, shape_features
from .texture import (
    DIRECTIONS,
    GLCM_NAMES,
    GLDM_NAMES,
    GLRLM_NAMES,
    GLSZM_NAMES,
    NGTDM_NAMES,
    glcm_features,
    glcm_matrix,
    gldm_features,
    glrlm_features,
    glrlm_matrix,
    glszm_features,
    glszm_matrix,
    ngtdm_features,
    ngtdm_table,
)

__all__ = [
    "FAMILY_NAMES", "FAMILY_ORDER", "FEATURES_PER_REGION", "REGION_NAMES",
    "FeatureVectorRaw", "extract_all", "feature_names",
    "FIRSTORDER_NAMES", "first_order", "nearest_rank_percentile",
    "DEFAULT_BINS", "QuantizedRegion", "quantize", "quantize_values",
    "SHAPE_NAMES", "pseudo_segment", "shape_features",
    "DIRECTIONS", "GLCM_NAMES", "GLDM_NAMES", "GLRLM_NAMES", "GLSZM_NAMES",
    "NGTDM_NAMES", "glcm_features", "glcm_matrix", "gldm_features",
    "glrlm_features", "glrlm_matrix", "glszm_features", "glszm_matrix",
    "ngtdm_features", "ngtdm_table",
]
