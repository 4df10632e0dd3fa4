import math

import numpy as np
import pytest

from mhaff.errors import EmptyForeground, EmptyMask
from mhaff.radiomics.extract import (
    FAMILY_ORDER,
    REGION_NAMES,
    extract_all,
    feature_names,
)
from mhaff.radiomics.firstorder import FIRSTORDER_NAMES, first_order, nearest_rank_percentile
from mhaff.radiomics.quantize import quantize, quantize_values
from mhaff.radiomics.shape import SHAPE_NAMES, pseudo_segment, shape_features
from mhaff.radiomics.texture import (
    DIRECTIONS,
    gldm_features,
    glcm_features,
    glcm_features_single,
    glcm_matrix,
    glrlm_features,
    glrlm_features_single,
    glrlm_matrix,
    glszm_features,
    glszm_matrix,
    ngtdm_features,
    ngtdm_table,
)


def _region(levels, mask=None):
    """QuantizedRegion straight from integer levels (no re-binning)."""
    levels = np.asarray(levels, dtype=np.int32)
    if mask is None:
        mask = np.ones(levels.shape, dtype=bool)
    return quantize(levels.astype(np.float64), mask, n_bins=int(levels.max()))


# quantization ---------------------------------------------------------------

def test_quantize_values_basics():
    out = quantize_values(np.array([0.0, 1.0, 2.0, 3.0]), 4)
    assert out.tolist() == [1, 2, 3, 4]
    assert quantize_values(np.array([5.0, 5.0]), 8).tolist() == [1, 1]
    out = quantize_values(np.array([0.0, 10.0]), 32)
    assert out.tolist() == [1, 32]


def test_quantize_preserves_rank_structure():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=200)
    levels = quantize_values(vals, 32)
    order = np.argsort(vals)
    assert np.all(np.diff(levels[order]) >= 0)
    assert levels.min() == 1 and levels.max() == 32


def test_quantize_crops_to_mask():
    vals = np.zeros((5, 5, 5))
    mask = np.zeros((5, 5, 5), dtype=bool)
    mask[1:3, 2:4, 1:2] = True
    vals[mask] = [1, 2, 3, 4]
    region = quantize(vals, mask, n_bins=4)
    assert region.levels.shape == (2, 2, 1)
    assert region.n_voxels == 4
    assert region.levels[~region.mask].sum() == 0


def test_quantize_empty_mask():
    with pytest.raises(EmptyMask):
        quantize(np.zeros((3, 3, 3)), np.zeros((3, 3, 3), dtype=bool))


# first order ----------------------------------------------------------------

def test_first_order_hand_values():
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    out = first_order(vals, voxel_volume=2.0)
    assert out["mean"] == 2.5
    assert out["median"] == 2.5
    assert out["minimum"] == 1.0
    assert out["maximum"] == 4.0
    assert out["range"] == 3.0
    assert out["variance"] == pytest.approx(1.25)        # population
    assert out["energy"] == pytest.approx(30.0)
    assert out["total_energy"] == pytest.approx(60.0)
    assert out["root_mean_square"] == pytest.approx(math.sqrt(7.5))
    assert out["interquartile_range"] == pytest.approx(2.0)  # nearest-rank
    assert out["mean_absolute_deviation"] == pytest.approx(1.0)


def test_first_order_constant_degenerate():
    out = first_order(np.full(32, 7.0))
    assert out["variance"] == 0.0
    assert out["skewness"] == 0.0
    assert out["kurtosis"] == 0.0
    assert out["entropy"] == 0.0
    assert out["uniformity"] == 1.0


def test_nearest_rank_percentile():
    vals = np.arange(1.0, 11.0)          # 1..10
    assert nearest_rank_percentile(vals, 10) == 1.0
    assert nearest_rank_percentile(vals, 50) == 5.0
    assert nearest_rank_percentile(vals, 90) == 9.0
    assert nearest_rank_percentile(vals, 100) == 10.0


def test_first_order_names_stable():
    assert len(FIRSTORDER_NAMES) == 18
    assert set(first_order(np.arange(5.0))) == set(FIRSTORDER_NAMES)


# GLCM -----------------------------------------------------------------------

def test_glcm_two_level_hand_example():
    # [[1, 1], [2, 2]] with the x offset: both pairs equal-level
    region = _region([[[1], [1]], [[2], [2]]])
    p = glcm_matrix(region, (0, 1, 0))
    assert p is not None
    assert p[0, 0] == pytest.approx(0.5)
    assert p[1, 1] == pytest.approx(0.5)
    f = glcm_features_single(p)
    assert f["contrast"] == pytest.approx(0.0)
    assert f["asm"] == pytest.approx(0.5)
    assert f["idm"] == pytest.approx(1.0)
    assert f["correlation"] == pytest.approx(1.0)
    assert f["entropy"] == pytest.approx(1.0)      # log2
    assert f["max_probability"] == pytest.approx(0.5)
    assert f["sum_average"] == pytest.approx(3.0)  # levels 1 and 2, i+j


def test_glcm_checkerboard():
    # alternating 1,2,1,2... along one axis: every pair crosses levels
    line = np.array([1, 2, 1, 2, 1, 2]).reshape(6, 1, 1)
    region = _region(line)
    p = glcm_matrix(region, (1, 0, 0))
    f = glcm_features_single(p)
    assert f["contrast"] == pytest.approx(1.0)
    assert f["correlation"] == pytest.approx(-1.0)
    assert f["asm"] == pytest.approx(0.5)


def test_glcm_constant_region_degenerate():
    region = _region(np.ones((3, 3, 3), dtype=int))
    out = glcm_features(region)
    assert out["contrast"] == pytest.approx(0.0)
    assert out["asm"] == pytest.approx(1.0)
    assert out["correlation"] == pytest.approx(1.0)
    assert out["entropy"] == pytest.approx(0.0)


def test_glcm_matrix_symmetric_and_normalized():
    rng = np.random.default_rng(1)
    region = _region(rng.integers(1, 6, size=(6, 6, 6)))
    for offset in DIRECTIONS:
        p = glcm_matrix(region, offset)
        assert p.sum() == pytest.approx(1.0)
        assert np.allclose(p, p.T)


# GLRLM ----------------------------------------------------------------------

def test_glrlm_single_run_hand_example():
    # one line of 4 equal voxels: single run of length 4 (constant -> level 1)
    region = _region(np.array([2, 2, 2, 2]).reshape(4, 1, 1))
    m = glrlm_matrix(region, (1, 0, 0))
    assert m.shape[1] >= 4
    assert m[0, 3] == 1
    assert m.sum() == 1
    f = glrlm_features_single(m, region.n_voxels)
    assert f["sre"] == pytest.approx(1 / 16)
    assert f["lre"] == pytest.approx(16.0)
    assert f["rp"] == pytest.approx(1 / 4)
    assert f["gln"] == pytest.approx(1.0)
    assert f["rln"] == pytest.approx(1.0)


def test_glrlm_alternating_runs():
    region = _region(np.array([1, 2, 1, 2]).reshape(4, 1, 1))
    m = glrlm_matrix(region, (1, 0, 0))
    assert m[:, 0].sum() == 4           # four runs of length 1
    assert m[:, 1:].sum() == 0
    f = glrlm_features_single(m, region.n_voxels)
    assert f["sre"] == pytest.approx(1.0)
    assert f["rp"] == pytest.approx(1.0)


def test_glrlm_constant_cube_axial_rp():
    side = 5
    region = _region(np.ones((side, side, side), dtype=int))
    for axis_dir in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        m = glrlm_matrix(region, axis_dir)
        assert m.sum() == side * side   # one run per line
        f = glrlm_features_single(m, region.n_voxels)
        assert f["rp"] == pytest.approx(1 / side)


def test_glrlm_diagonal_runs():
    # main space diagonal of a 3-cube has one length-3 run; off-diagonals shorter
    region = _region(np.ones((3, 3, 3), dtype=int))
    m = glrlm_matrix(region, (1, 1, 1))
    assert m[0, 2] == 1                 # the single length-3 diagonal
    assert m.sum() == 19                # 27 voxels partitioned into diagonals
    total = sum(m[0, j] * (j + 1) for j in range(m.shape[1]))
    assert total == 27


# GLSZM ----------------------------------------------------------------------

def test_glszm_single_zone():
    region = _region(np.ones((3, 3, 3), dtype=int))
    m = glszm_matrix(region)
    assert m.sum() == 1
    assert m[0, 26] == 1                # one zone of size 27
    f = glszm_features(region)
    assert f["zp"] == pytest.approx(1 / 27)
    assert f["sae"] == pytest.approx(1 / 27 ** 2)
    assert f["lae"] == pytest.approx(27.0 ** 2)


def test_glszm_two_zones_same_level():
    # two disconnected single-voxel zones of level 2 in a level-1 sea
    levels = np.ones((5, 5, 1), dtype=int)
    levels[0, 0, 0] = 2
    levels[4, 4, 0] = 2
    region = _region(levels)
    m = glszm_matrix(region)
    assert m[1, 0] == 2                 # level 2: two zones of size 1
    assert m[0, 22] == 1                # level 1: one zone of size 23


def test_glszm_diagonal_connectivity():
    # 26-connectivity joins diagonal neighbors into one zone
    levels = np.ones((4, 4, 1), dtype=int)
    levels[0, 0, 0] = 2
    levels[1, 1, 0] = 2
    region = _region(levels)
    m = glszm_matrix(region)
    assert m[1, 1] == 1                 # single zone of size 2


# GLDM -----------------------------------------------------------------------

def test_gldm_constant_cube():
    region = _region(np.ones((3, 3, 3), dtype=int))
    f = gldm_features(region)
    # center voxel depends on all 26 neighbors; every voxel counted once
    assert f["gln"] == pytest.approx(27.0)      # single level: 27^2 / 27
    assert f["lgle"] == pytest.approx(1.0)
    assert f["hgle"] == pytest.approx(1.0)


def test_gldm_isolated_voxel_dependence():
    levels = np.ones((3, 3, 3), dtype=int)
    levels[1, 1, 1] = 2
    region = _region(levels)
    f = gldm_features(region)
    assert f["dn"] > 0
    # center has zero same-level neighbors: dependence bin j=1 gets one entry
    from mhaff.radiomics.texture import gldm_matrix
    m = gldm_matrix(region)
    assert m[1, 0] == 1


# NGTDM ----------------------------------------------------------------------

def test_ngtdm_hand_example():
    # 3x3 slice of 1s with center 2: s2 = 1, s1 = 4/3 + 4/5 = 32/15
    levels = np.ones((3, 3, 1), dtype=int)
    levels[1, 1, 0] = 2
    region = _region(levels)
    n_i, s_i = ngtdm_table(region)
    assert n_i[0] == 8 and n_i[1] == 1
    assert s_i[1] == pytest.approx(1.0)
    assert s_i[0] == pytest.approx(32 / 15)


def test_ngtdm_constant_degenerate():
    region = _region(np.ones((4, 4, 4), dtype=int))
    f = ngtdm_features(region)
    assert f["contrast"] == 0.0
    assert f["busyness"] == 0.0
    assert f["strength"] == 0.0
    # zero total difference: coarseness hits its cap
    assert f["coarseness"] == 1e6


def test_ngtdm_nonzero_on_texture():
    rng = np.random.default_rng(5)
    region = _region(rng.integers(1, 7, size=(6, 6, 6)))
    f = ngtdm_features(region)
    assert f["contrast"] > 0
    assert f["busyness"] > 0
    assert 0 < f["coarseness"] < 1e6


# shape ----------------------------------------------------------------------

def test_shape_ten_mm_block():
    mask = np.ones((16, 16, 16), dtype=bool)
    out = shape_features(mask, (0.625, 0.625, 0.625))
    assert out["volume"] == pytest.approx(1000.0)
    assert out["surface_area"] == pytest.approx(600.0)
    assert abs(out["sphericity"] - 0.806) < 1e-3
    assert out["elongation"] == pytest.approx(1.0)
    assert out["flatness"] == pytest.approx(1.0)


def test_shape_slab_anisotropy():
    mask = np.ones((16, 16, 4), dtype=bool)
    out = shape_features(mask, (1.0, 1.0, 1.0))
    assert out["volume"] == pytest.approx(1024.0)
    assert out["flatness"] < 0.5
    assert set(out) == set(SHAPE_NAMES)


def test_pseudo_segment_largest_component():
    hu = np.full((10, 10, 10), -800.0, dtype=np.float32)
    hu[1:4, 1:4, 1:4] = 0.0       # 27 voxels
    hu[7:9, 7:9, 7:9] = 0.0       # 8 voxels, disconnected
    mask = pseudo_segment(hu)
    assert int(mask.sum()) == 27
    assert mask[2, 2, 2] and not mask[7, 7, 7]


def test_pseudo_segment_empty():
    hu = np.full((5, 5, 5), -800.0, dtype=np.float32)
    with pytest.raises(EmptyForeground):
        pseudo_segment(hu)


# rotation invariance --------------------------------------------------------

def _texture_vector(region):
    out = {}
    out.update({f"glcm_{k}": v for k, v in glcm_features(region).items()})
    out.update({f"glrlm_{k}": v for k, v in glrlm_features(region).items()})
    out.update({f"glszm_{k}": v for k, v in glszm_features(region).items()})
    out.update({f"gldm_{k}": v for k, v in gldm_features(region).items()})
    out.update({f"ngtdm_{k}": v for k, v in ngtdm_features(region).items()})
    return out


def test_texture_rotation_invariance():
    rng = np.random.default_rng(7)
    levels = rng.integers(1, 9, size=(7, 7, 7))
    base = _texture_vector(_region(levels))
    rotations = [
        np.rot90(levels, k=1, axes=(0, 1)),
        np.rot90(levels, k=2, axes=(0, 2)),
        np.rot90(levels, k=3, axes=(1, 2)),
        np.rot90(np.rot90(levels, k=1, axes=(0, 1)), k=1, axes=(1, 2)),
    ]
    for rot in rotations:
        got = _texture_vector(_region(rot))
        for name, value in base.items():
            assert got[name] == pytest.approx(value, abs=1e-9), name


# extraction assembly --------------------------------------------------------

def test_feature_names_layout():
    names = feature_names()
    assert len(names) == 304
    assert len(set(names)) == 304
    for region in REGION_NAMES:
        per_region = [n for n in names if n.startswith(region + "_")]
        assert len(per_region) == 76
    # family encoded as second underscore token
    fams = {n.split("_")[1] for n in names}
    assert fams == set(FAMILY_ORDER)


def test_extract_all_on_phantom():
    from mhaff import phantom, preprocess

    sample = phantom.gen_sample(1, 1, seed=13, split="train")
    vol = preprocess.resample_trilinear(sample.volume, (0.625,) * 3)
    lung = preprocess.compute_lung_mask(vol)
    fv = extract_all(vol, sample.annotation, lung)
    assert len(fv.values) == 304
    assert fv.label == 1
    named = dict(zip(fv.names, fv.values))
    # the 16-cube sits inside the nodule+lung: first-order stats are sane HU
    assert -1000 < named["cube16_firstorder_mean"] < 200
    assert named["lung_shape_volume"] > 10_000.0     # mm^3, two lungs
    n_missing = sum(v is None for v in fv.values)
    assert n_missing == 0
