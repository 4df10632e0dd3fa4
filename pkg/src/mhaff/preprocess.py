"""Volume preprocessing: resampling, normalization, lung mask, ROI/cube crops, augmentation.

All transforms are pure. The lung mask uses a simple threshold +
morphology chain (threshold at -320 HU, boundary rejection, two largest
components, closing, per-slice hole fill).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask
from .volume_io import NoduleAnnotation, Volume

DEFAULT_SPACING = 0.625
DEFAULT_HU_WINDOW = (-1000.0, 400.0)
ROI_SIZE = 32
CUBE_SIDES = (16, 32, 48)
AIR_HU = -1000.0
LUNG_THRESHOLD_HU = -320.0


@dataclass
class RoiStack:
    """n normalized 32x32 slices centered on a nodule."""

    pixels: np.ndarray  # (n, 32, 32) float32 in [0, 1]
    nodule_id: str
    slice_z: tuple[int, ...]


@dataclass
class NoduleCube:
    side: int
    voxels: np.ndarray  # (side, side, side) HU


@dataclass
class LungMask:
    mask: np.ndarray  # bool, same dims as the source volume


def resample_trilinear(volume: Volume, target_spacing: tuple[float, float, float]) -> Volume:
    """Resample to a new isotropic/anisotropic grid by trilinear interpolation.

    Output dims = round(dims * spacing / target), at least 1 per axis.
    Samples outside the source grid clamp to the nearest voxel, so a
    constant volume stays constant.
    """
    sx, sy, sz = target_spacing
    if sx <= 0 or sy <= 0 or sz <= 0:
        raise ValueError(f"target spacing must be positive, got {target_spacing}")

    old = np.asarray(volume.spacing, dtype=np.float64)
    new = np.asarray(target_spacing, dtype=np.float64)
    if np.array_equal(old, new):
        return Volume(dims=volume.dims, spacing=tuple(float(s) for s in new),
                      origin=volume.origin,
                      voxels=np.array(volume.voxels, dtype=np.float32))

    dims = np.asarray(volume.dims)
    new_dims = np.maximum(np.rint(dims * old / new).astype(int), 1)
    src = np.asarray(volume.voxels, dtype=np.float32)

    # Voxel-center aligned sample coordinates in source index space.
    coords = []
    for axis in range(3):
        u = np.arange(new_dims[axis], dtype=np.float64) * (new[axis] / old[axis])
        coords.append(np.clip(u, 0.0, dims[axis] - 1))
    gx = coords[0][:, None, None]
    gy = coords[1][None, :, None]
    gz = coords[2][None, None, :]

    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    z0 = np.floor(gz).astype(int)
    x1 = np.minimum(x0 + 1, dims[0] - 1)
    y1 = np.minimum(y0 + 1, dims[1] - 1)
    z1 = np.minimum(z0 + 1, dims[2] - 1)
    fx = (gx - x0).astype(np.float32)
    fy = (gy - y0).astype(np.float32)
    fz = (gz - z0).astype(np.float32)

    c000 = src[x0, y0, z0]
    c100 = src[x1, y0, z0]
    c010 = src[x0, y1, z0]
    c110 = src[x1, y1, z0]
    c001 = src[x0, y0, z1]
    c101 = src[x1, y0, z1]
    c011 = src[x0, y1, z1]
    c111 = src[x1, y1, z1]

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz

    return Volume(dims=tuple(int(d) for d in new_dims),
                  spacing=tuple(float(s) for s in new),
                  origin=volume.origin, voxels=out.astype(np.float32))


def normalize_hu(volume: Volume, hu_window: tuple[float, float] = DEFAULT_HU_WINDOW) -> Volume:
    """Map HU onto [0, 1] with a fixed lung window, clamping outside it."""
    lo, hi = hu_window
    scaled = (np.asarray(volume.voxels, dtype=np.float32) - lo) / (hi - lo)
    return Volume(dims=volume.dims, spacing=volume.spacing, origin=volume.origin,
                  voxels=np.clip(scaled, 0.0, 1.0))


def _crop_with_fill(voxels: np.ndarray, lo: tuple[int, int, int],
                    shape: tuple[int, int, int], fill: float) -> np.ndarray:
    """Crop voxels[lo : lo+shape], filling out-of-volume regions with `fill`."""
    out = np.full(shape, fill, dtype=np.float32)
    src_lo = [max(lo[a], 0) for a in range(3)]
    src_hi = [min(lo[a] + shape[a], voxels.shape[a]) for a in range(3)]
    if any(src_lo[a] >= src_hi[a] for a in range(3)):
        return out
    dst_lo = [src_lo[a] - lo[a] for a in range(3)]
    dst_hi = [src_hi[a] - lo[a] for a in range(3)]
    out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = \
        voxels[src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]]
    return out


def extract_roi_stack(normalized: Volume, annotation: NoduleAnnotation, n: int) -> RoiStack:
    """Crop the central n slices as 32x32 ROIs around the nodule center.

    n must be odd so the stack is symmetric around the center slice.
    Out-of-volume pixels are 0.
    """
    if n < 1 or n % 2 == 0:
        raise ValueError(f"slice count must be odd and >= 1, got {n}")
    cx, cy, cz = annotation.center
    half = ROI_SIZE // 2
    voxels = np.asarray(normalized.voxels, dtype=np.float32)
    z_lo = cz - (n - 1) // 2
    block = _crop_with_fill(voxels, (cx - half, cy - half, z_lo),
                            (ROI_SIZE, ROI_SIZE, n), fill=0.0)
    # (x, y, z) -> (slice, y, x)
    pixels = np.ascontiguousarray(block.transpose(2, 1, 0))
    return RoiStack(pixels=pixels, nodule_id=annotation.nodule_id,
                    slice_z=tuple(range(z_lo, z_lo + n)))


def extract_cubes(volume: Volume, annotation: NoduleAnnotation,
                  sides: tuple[int, ...] = CUBE_SIDES) -> tuple[NoduleCube, ...]:
    """Cut centered HU cubes at each scale; out-of-volume voxels become air."""
    cx, cy, cz = annotation.center
    voxels = np.asarray(volume.voxels, dtype=np.float32)
    cubes = []
    for side in sides:
        half = side // 2
        block = _crop_with_fill(voxels, (cx - half, cy - half, cz - half),
                                (side, side, side), fill=AIR_HU)
        cubes.append(NoduleCube(side=side, voxels=block))
    return tuple(cubes)


def compute_lung_mask(volume: Volume) -> LungMask:
    """Segment the lungs from a resampled HU volume.

    Chain: threshold < -320 HU, 6-connected components, drop components
    touching the x/y boundary faces, keep the two largest, close with a
    radius-2 ball, fill holes per axial slice.
    """
    voxels = np.asarray(volume.voxels)
    air = voxels < LUNG_THRESHOLD_HU
    if not air.any():
        raise EmptyMask("no voxels below lung threshold")

    labels, n_comp = ndimage.label(air, structure=ndimage.generate_binary_structure(3, 1))
    if n_comp == 0:
        raise EmptyMask("no connected component below lung threshold")

    border_labels = set()
    for face in (labels[0, :, :], labels[-1, :, :], labels[:, 0, :], labels[:, -1, :]):
        border_labels.update(np.unique(face).tolist())
    border_labels.discard(0)

    counts = np.bincount(labels.ravel())
    candidates = [(counts[lab], lab) for lab in range(1, n_comp + 1)
                  if lab not in border_labels and counts[lab] > 0]
    if not candidates:
        raise EmptyMask("every air component touches the x/y boundary")
    candidates.sort(reverse=True)
    keep = [lab for _, lab in candidates[:2]]
    mask = np.isin(labels, keep)

    ball = _ball_structure(2)
    mask = ndimage.binary_closing(mask, structure=ball)
    for k in range(mask.shape[2]):
        mask[:, :, k] = ndimage.binary_fill_holes(mask[:, :, k])
    return LungMask(mask=mask)


def _ball_structure(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    x, y, z = np.meshgrid(r, r, r, indexing="ij")
    return (x * x + y * y + z * z) <= radius * radius


def augment(pixels: np.ndarray, rng, clamp01: bool = True) -> np.ndarray:
    """Random in-plane training augmentation of a slice stack or cube.

    Each transform fires independently with probability 0.5: rotation by
    k*90deg, horizontal flip, vertical flip, integer shift in [-2, 2]^2
    with zero fill, intensity scale in [0.9, 1.1] (re-clamped to [0, 1]).
    The caller owns the generator; one generator per (sample, epoch).
    """
    out = np.array(pixels, dtype=np.float32)
    if out.ndim != 3:
        raise ValueError(f"expected a 3D stack, got shape {out.shape}")

    if rng.random() < 0.5:
        k = int(rng.integers(1, 4))
        out = np.rot90(out, k=k, axes=(1, 2))
    if rng.random() < 0.5:
        out = out[:, :, ::-1]
    if rng.random() < 0.5:
        out = out[:, ::-1, :]
    if rng.random() < 0.5:
        dy = int(rng.integers(-2, 3))
        dx = int(rng.integers(-2, 3))
        shifted = np.zeros_like(out)
        h, w = out.shape[1], out.shape[2]
        src_y = slice(max(0, -dy), min(h, h - dy))
        src_x = slice(max(0, -dx), min(w, w - dx))
        dst_y = slice(max(0, dy), min(h, h + dy))
        dst_x = slice(max(0, dx), min(w, w + dx))
        shifted[:, dst_y, dst_x] = out[:, src_y, src_x]
        out = shifted
    if rng.random() < 0.5:
        factor = rng.uniform(0.9, 1.1)
        out = out * np.float32(factor)
        if clamp01:
            out = np.clip(out, 0.0, 1.0)
    return np.ascontiguousarray(out)


def augmentation_rng(global_seed: int, sample_id: str, epoch: int) -> np.random.Generator:
    """Deterministic per-sample generator; independent streams per epoch."""
    import hashlib

    digest = hashlib.blake2s(sample_id.encode("utf-8"), digest_size=8).digest()
    sample_key = int.from_bytes(digest, "little")
    seq = np.random.SeedSequence([global_seed, sample_key, epoch])
    return np.random.Generator(np.random.PCG64(seq))
