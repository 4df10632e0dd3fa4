"""Texture-matrix families: GLCM, GLRLM, GLSZM, GLDM, NGTDM.

Matrices are built on QuantizedRegion levels (1..G, 0 = outside mask).
GLCM and GLRLM use the 13 unique 3D directions and average features over
them; GLSZM zones and GLDM/NGTDM neighborhoods use 26-connectivity.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import EmptyMask, NoValidPairs
from .quantize import QuantizedRegion

#: The 13 unique 3D offsets (each direction paired with its negation).
DIRECTIONS: tuple[tuple[int, int, int], ...] = (
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
)

GLCM_NAMES = [
    "contrast", "dissimilarity", "asm", "idm", "correlation", "entropy",
    "sum_average", "cluster_shade", "cluster_prominence", "max_probability",
]
GLRLM_NAMES = [
    "sre", "lre", "gln", "rln", "rp",
    "lglre", "hglre", "srlgle", "srhgle", "lrlgle", "lrhgle",
]
GLSZM_NAMES = [
    "sae", "lae", "gln", "szn", "zp",
    "lglze", "hglze", "salgle", "sahgle", "lalgle", "lahgle",
]
GLDM_NAMES = [
    "sde", "lde", "gln", "dn", "dependence_entropy",
    "lgle", "hgle", "sdlgle", "sdhgle", "ldlgle", "ldhgle",
]
NGTDM_NAMES = ["coarseness", "contrast", "busyness", "complexity", "strength"]

COARSENESS_CAP = 1e6


def _offset_slices(shape, offset):
    """Source/destination slice pairs so dst = src + offset stays in bounds."""
    src, dst = [], []
    for n, d in zip(shape, offset):
        src.append(slice(max(0, -d), n - max(0, d)))
        dst.append(slice(max(0, d), n - max(0, -d)))
    return tuple(src), tuple(dst)


# ---------------------------------------------------------------------------
# GLCM

def glcm_matrix(region: QuantizedRegion, offset: tuple[int, int, int]) -> np.ndarray | None:
    """Symmetric normalized co-occurrence matrix for one offset.

    Returns None when the offset yields no in-mask voxel pair.
    """
    g = region.n_levels
    src, dst = _offset_slices(region.levels.shape, offset)
    a = region.levels[src]
    b = region.levels[dst]
    valid = (a > 0) & (b > 0)
    if not valid.any():
        return None
    pairs = np.bincount((a[valid] - 1) * g + (b[valid] - 1), minlength=g * g)
    counts = pairs.reshape(g, g).astype(np.float64)
    counts = counts + counts.T
    return counts / counts.sum()


def glcm_features_single(p: np.ndarray) -> dict[str, float]:
    g = p.shape[0]
    idx = np.arange(1, g + 1, dtype=np.float64)
    i = idx[:, None]
    j = idx[None, :]
    px = p.sum(axis=1)
    mu_x = float((idx * px).sum())
    mu_y = mu_x  # symmetric matrix
    sigma_x = float(np.sqrt(((idx - mu_x) ** 2 * px).sum()))
    diff = i - j
    summ = i + j - mu_x - mu_y

    if sigma_x > 1e-12:
        correlation = float((((i - mu_x) * (j - mu_y) * p).sum()) / (sigma_x * sigma_x))
    else:
        correlation = 1.0  # degenerate single-level region

    nonzero = p[p > 0]
    return {
        "contrast": float((diff ** 2 * p).sum()),
        "dissimilarity": float((np.abs(diff) * p).sum()),
        "asm": float((p ** 2).sum()),
        "idm": float((p / (1.0 + diff ** 2)).sum()),
        "correlation": correlation,
        "entropy": float(-(nonzero * np.log2(nonzero)).sum()),
        "sum_average": float(((i + j) * p).sum()),
        "cluster_shade": float((summ ** 3 * p).sum()),
        "cluster_prominence": float((summ ** 4 * p).sum()),
        "max_probability": float(p.max()),
    }


def glcm_features(region: QuantizedRegion,
                  offsets: tuple[tuple[int, int, int], ...] = DIRECTIONS) -> dict[str, float]:
    """Features averaged over offsets; offsets without pairs are skipped."""
    per_offset = []
    for offset in offsets:
        p = glcm_matrix(region, offset)
        if p is not None:
            per_offset.append(glcm_features_single(p))
    if not per_offset:
        raise NoValidPairs("no co-occurring voxel pair in any offset")
    return {name: float(np.mean([f[name] for f in per_offset])) for name in GLCM_NAMES}


# ---------------------------------------------------------------------------
# Direction-aligned line extraction (shared by GLRLM)

def _lines_along(levels: np.ndarray, direction: tuple[int, int, int]) -> np.ndarray:
    """Rearrange a 3D level array into rows that follow `direction`.

    Diagonal directions are sheared so each lattice line becomes one row
    of the output; unoccupied cells are 0 (treated as run breaks).
    """
    shape = levels.shape
    primary = next(a for a in range(3) if direction[a] != 0)
    n_p = shape[primary]

    out_shape = []
    for axis in range(3):
        if axis == primary:
            out_shape.append(n_p)
        elif direction[axis] != 0:
            out_shape.append(shape[axis] + n_p - 1)
        else:
            out_shape.append(shape[axis])

    grids = np.ogrid[0:shape[0], 0:shape[1], 0:shape[2]]
    index = []
    for axis in range(3):
        if axis == primary:
            index.append(grids[axis])
        elif direction[axis] == 1:
            index.append(grids[axis] - grids[primary] + (n_p - 1))
        elif direction[axis] == -1:
            index.append(grids[axis] + grids[primary])
        else:
            index.append(grids[axis])

    sheared = np.zeros(out_shape, dtype=levels.dtype)
    sheared[tuple(index)] = levels
    lines = np.moveaxis(sheared, primary, -1)
    return lines.reshape(-1, n_p)


def _run_lengths(lines: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run-length encode every row; returns (levels, lengths) of valid runs."""
    n_rows, width = lines.shape
    flat = np.zeros((n_rows, width + 1), dtype=lines.dtype)
    flat[:, :width] = lines
    flat = flat.ravel()
    change = np.nonzero(np.diff(flat) != 0)[0]
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change + 1, [flat.size]))
    values = flat[starts]
    keep = values > 0
    return values[keep], (ends - starts)[keep]


def glrlm_matrix(region: QuantizedRegion, direction: tuple[int, int, int]) -> np.ndarray:
    """Gray-level run-length matrix R[level-1, length-1] for one direction."""
    levels, lengths = _run_lengths(_lines_along(region.levels, direction))
    if levels.size == 0:
        raise EmptyMask("no run found; region is empty")
    max_len = int(lengths.max())
    g = region.n_levels
    flat = np.bincount((levels.astype(np.int64) - 1) * max_len + (lengths - 1),
                       minlength=g * max_len)
    return flat.reshape(g, max_len).astype(np.float64)


def glrlm_features_single(matrix: np.ndarray, n_voxels: int) -> dict[str, float]:
    g, max_len = matrix.shape
    i = np.arange(1, g + 1, dtype=np.float64)[:, None]
    el = np.arange(1, max_len + 1, dtype=np.float64)[None, :]
    n_runs = matrix.sum()
    row = matrix.sum(axis=1)
    col = matrix.sum(axis=0)
    return {
        "sre": float((matrix / el ** 2).sum() / n_runs),
        "lre": float((matrix * el ** 2).sum() / n_runs),
        "gln": float((row ** 2).sum() / n_runs),
        "rln": float((col ** 2).sum() / n_runs),
        "rp": float(n_runs / n_voxels),
        "lglre": float((matrix / i ** 2).sum() / n_runs),
        "hglre": float((matrix * i ** 2).sum() / n_runs),
        "srlgle": float((matrix / (i ** 2 * el ** 2)).sum() / n_runs),
        "srhgle": float((matrix * i ** 2 / el ** 2).sum() / n_runs),
        "lrlgle": float((matrix * el ** 2 / i ** 2).sum() / n_runs),
        "lrhgle": float((matrix * i ** 2 * el ** 2).sum() / n_runs),
    }


def glrlm_features(region: QuantizedRegion,
                   directions: tuple[tuple[int, int, int], ...] = DIRECTIONS) -> dict[str, float]:
    """Run-length features averaged over the 13 directions."""
    if region.n_voxels == 0:
        raise EmptyMask("empty region")
    per_dir = [glrlm_features_single(glrlm_matrix(region, d), region.n_voxels)
               for d in directions]
    return {name: float(np.mean([f[name] for f in per_dir])) for name in GLRLM_NAMES}


# ---------------------------------------------------------------------------
# GLSZM

def glszm_matrix(region: QuantizedRegion) -> np.ndarray:
    """Size-zone matrix S[level-1, size-1]; zones are 26-connected."""
    if region.n_voxels == 0:
        raise EmptyMask("empty region")
    structure = np.ones((3, 3, 3), dtype=bool)
    zone_levels: list[np.ndarray] = []
    zone_sizes: list[np.ndarray] = []
    present = np.unique(region.levels[region.mask])
    for level in present:
        labelled, n_zones = ndimage.label(region.levels == level, structure=structure)
        if n_zones == 0:
            continue
        sizes = np.bincount(labelled.ravel())[1:]
        zone_levels.append(np.full(n_zones, level, dtype=np.int64))
        zone_sizes.append(sizes.astype(np.int64))
    levels = np.concatenate(zone_levels)
    sizes = np.concatenate(zone_sizes)
    g = region.n_levels
    max_size = int(sizes.max())
    flat = np.bincount((levels - 1) * max_size + (sizes - 1), minlength=g * max_size)
    return flat.reshape(g, max_size).astype(np.float64)


def glszm_features(region: QuantizedRegion) -> dict[str, float]:
    matrix = glszm_matrix(region)
    g, max_size = matrix.shape
    i = np.arange(1, g + 1, dtype=np.float64)[:, None]
    s = np.arange(1, max_size + 1, dtype=np.float64)[None, :]
    n_zones = matrix.sum()
    row = matrix.sum(axis=1)
    col = matrix.sum(axis=0)
    return {
        "sae": float((matrix / s ** 2).sum() / n_zones),
        "lae": float((matrix * s ** 2).sum() / n_zones),
        "gln": float((row ** 2).sum() / n_zones),
        "szn": float((col ** 2).sum() / n_zones),
        "zp": float(n_zones / region.n_voxels),
        "lglze": float((matrix / i ** 2).sum() / n_zones),
        "hglze": float((matrix * i ** 2).sum() / n_zones),
        "salgle": float((matrix / (i ** 2 * s ** 2)).sum() / n_zones),
        "sahgle": float((matrix * i ** 2 / s ** 2).sum() / n_zones),
        "lalgle": float((matrix * s ** 2 / i ** 2).sum() / n_zones),
        "lahgle": float((matrix * i ** 2 * s ** 2).sum() / n_zones),
    }


# ---------------------------------------------------------------------------
# GLDM

def _dependence_counts(region: QuantizedRegion) -> np.ndarray:
    """Per-voxel count of 26-neighbors sharing the voxel's level."""
    levels = region.levels
    dep = np.zeros(levels.shape, dtype=np.int32)
    for offset in DIRECTIONS:
        src, dst = _offset_slices(levels.shape, offset)
        a = levels[src]
        b = levels[dst]
        equal = (a > 0) & (b > 0) & (a == b)
        dep[src] += equal
        dep[dst] += equal
    return dep


def gldm_matrix(region: QuantizedRegion) -> np.ndarray:
    """Dependence matrix D[level-1, dependence]; dependence ranges 0..26."""
    if region.n_voxels == 0:
        raise EmptyMask("empty region")
    dep = _dependence_counts(region)
    levels = region.levels[region.mask].astype(np.int64)
    deps = dep[region.mask].astype(np.int64)
    g = region.n_levels
    n_dep = 27
    flat = np.bincount((levels - 1) * n_dep + deps, minlength=g * n_dep)
    matrix = flat.reshape(g, n_dep).astype(np.float64)
    last = np.nonzero(matrix.sum(axis=0))[0]
    return matrix[:, :last.max() + 1]


def gldm_features(region: QuantizedRegion) -> dict[str, float]:
    matrix = gldm_matrix(region)
    g, n_dep = matrix.shape
    i = np.arange(1, g + 1, dtype=np.float64)[:, None]
    j = np.arange(1, n_dep + 1, dtype=np.float64)[None, :]  # dependence + 1
    total = matrix.sum()
    row = matrix.sum(axis=1)
    col = matrix.sum(axis=0)
    probs = matrix[matrix > 0] / total
    return {
        "sde": float((matrix / j ** 2).sum() / total),
        "lde": float((matrix * j ** 2).sum() / total),
        "gln": float((row ** 2).sum() / total),
        "dn": float((col ** 2).sum() / total),
        "dependence_entropy": float(-(probs * np.log2(probs)).sum()),
        "lgle": float((matrix / i ** 2).sum() / total),
        "hgle": float((matrix * i ** 2).sum() / total),
        "sdlgle": float((matrix / (i ** 2 * j ** 2)).sum() / total),
        "sdhgle": float((matrix * i ** 2 / j ** 2).sum() / total),
        "ldlgle": float((matrix * j ** 2 / i ** 2).sum() / total),
        "ldhgle": float((matrix * i ** 2 * j ** 2).sum() / total),
    }


# ---------------------------------------------------------------------------
# NGTDM

def ngtdm_table(region: QuantizedRegion) -> tuple[np.ndarray, np.ndarray]:
    """Per-level voxel counts n_i and absolute-difference sums s_i.

    s_i sums |level - mean(26-neighborhood)| over in-mask voxels of level
    i that have at least one in-mask neighbor.
    """
    if region.n_voxels == 0:
        raise EmptyMask("empty region")
    levels = region.levels.astype(np.float64)
    in_mask = region.mask
    neighbor_sum = np.zeros(levels.shape, dtype=np.float64)
    neighbor_cnt = np.zeros(levels.shape, dtype=np.int32)
    for offset in DIRECTIONS:
        src, dst = _offset_slices(levels.shape, offset)
        m_src = in_mask[src]
        m_dst = in_mask[dst]
        both = m_src & m_dst
        neighbor_sum[src] += np.where(both, levels[dst], 0.0)
        neighbor_cnt[src] += both
        neighbor_sum[dst] += np.where(both, levels[src], 0.0)
        neighbor_cnt[dst] += both

    usable = in_mask & (neighbor_cnt > 0)
    g = region.n_levels
    n_i = np.zeros(g, dtype=np.float64)
    s_i = np.zeros(g, dtype=np.float64)
    if usable.any():
        lv = region.levels[usable].astype(np.int64)
        diff = np.abs(levels[usable] - neighbor_sum[usable] / neighbor_cnt[usable])
        n_i = np.bincount(lv - 1, minlength=g).astype(np.float64)
        s_i = np.bincount(lv - 1, weights=diff, minlength=g)
    return n_i, s_i


def ngtdm_features(region: QuantizedRegion) -> dict[str, float]:
    n_i, s_i = ngtdm_table(region)
    total = n_i.sum()
    if total == 0:
        # isolated voxels only; treat like a constant region
        return {"coarseness": COARSENESS_CAP, "contrast": 0.0,
                "busyness": 0.0, "complexity": 0.0, "strength": 0.0}
    p = n_i / total
    present = np.nonzero(p > 0)[0]
    levels = (present + 1).astype(np.float64)
    pp = p[present]
    ss = s_i[present]
    n_present = len(present)

    denom_coarse = float((pp * ss).sum())
    coarseness = COARSENESS_CAP if denom_coarse == 0 else 1.0 / denom_coarse

    if n_present > 1:
        li = levels[:, None]
        lj = levels[None, :]
        pi = pp[:, None]
        pj = pp[None, :]
        si = ss[:, None]
        sj = ss[None, :]
        contrast = float((pi * pj * (li - lj) ** 2).sum()
                         / (n_present * (n_present - 1)) * ss.sum() / total)
        busy_denom = float(np.abs(li * pi - lj * pj).sum())
        busyness = 0.0 if busy_denom == 0 else denom_coarse / busy_denom
        complexity = float((np.abs(li - lj) * (pi * si + pj * sj) / (pi + pj)).sum() / total)
        s_total = float(ss.sum())
        strength = 0.0 if s_total == 0 else \
            float(((pi + pj) * (li - lj) ** 2).sum() / s_total)
    else:
        contrast = 0.0
        busyness = 0.0
        complexity = 0.0
        strength = 0.0

    return {"coarseness": coarseness, "contrast": contrast,
            "busyness": busyness, "complexity": complexity, "strength": strength}
