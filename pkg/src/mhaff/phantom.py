"""Deterministic synthetic CT corpus with class-separable nodules.

Each 96-voxel cube at 0.625 mm holds a soft-tissue body ellipsoid, two
air-filled lung ellipsoids with Gaussian texture, and one nodule of a
class-specific recipe placed fully inside the larger lung:

  class 0: smooth ground-glass ellipsoid at -600 HU
  class 1: ground-glass rim with a solid -100 HU core (half radius)
  class 2: solid +20 HU with sigma-80 texture and 6-10 radial spicules

Every volume is a pure function of (seed, index) through a counter-based
generator, so corpora are reproducible and generation could run in
parallel per sample.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnnotationParseError, LabelOutOfRange
from .volume_io import NoduleAnnotation, Volume, write_annotations, write_volume

SIDE = 96
SPACING = (0.625, 0.625, 0.625)
BODY_HU = 0.0
AIR_HU = -1000.0
LUNG_HU = -850.0
LUNG_NOISE_SIGMA = 30.0
GGO_HU = -600.0
CORE_HU = -100.0
SOLID_HU = 20.0
SOLID_NOISE_SIGMA = 80.0
RADIUS_MM = (4.0, 10.0)
SPICULE_LEN = (2.0, 5.0)
HU_CLIP = (-1024.0, 600.0)

BODY_CENTER = (47.5, 47.5, 47.5)
BODY_SEMI = (45.0, 43.0, 48.0)
LUNG1_CENTER = (30.0, 48.0, 48.0)      # nodule host
LUNG1_SEMI = (24.0, 28.0, 38.0)
LUNG2_CENTER = (73.0, 48.0, 46.0)
LUNG2_SEMI = (13.0, 19.0, 29.0)

N_CLASSES = 3


@dataclass
class PhantomSample:
    annotation: NoduleAnnotation
    volume: Volume
    mask: Volume
    split: str


def _ellipsoid_mask(shape, center, semi) -> np.ndarray:
    grids = np.ogrid[0:shape[0], 0:shape[1], 0:shape[2]]
    acc = np.zeros(shape, dtype=np.float64)
    for g, c, a in zip(grids, center, semi):
        acc = acc + ((g - c) / a) ** 2
    return acc <= 1.0


def _inside_ellipsoid(points: np.ndarray, center, semi) -> np.ndarray:
    acc = np.zeros(len(points), dtype=np.float64)
    for axis in range(3):
        acc += ((points[:, axis] - center[axis]) / semi[axis]) ** 2
    return acc <= 1.0


def gen_nodule(cls: int, radius_vox: float, rng: np.random.Generator
               ) -> tuple[np.ndarray, np.ndarray]:
    """HU patch and mask for one nodule, centered in a cubic patch."""
    if cls not in (0, 1, 2):
        raise LabelOutOfRange(f"unknown nodule class {cls}")
    if cls == 2:
        axes = radius_vox * rng.uniform(0.9, 1.1, size=3)
    else:
        axes = radius_vox * rng.uniform(0.85, 1.15, size=3)
    pad = int(np.ceil(axes.max() + SPICULE_LEN[1])) + 2
    side = 2 * pad + 1
    center = (pad, pad, pad)
    mask = _ellipsoid_mask((side, side, side), center, axes)
    hu = np.zeros((side, side, side), dtype=np.float64)

    if cls == 0:
        hu[mask] = GGO_HU
    elif cls == 1:
        grids = np.ogrid[0:side, 0:side, 0:side]
        r2 = sum((g - pad) ** 2 for g in grids)
        core = r2 <= (0.5 * radius_vox) ** 2
        hu[mask] = GGO_HU
        hu[mask & core] = CORE_HU
    else:
        hu[mask] = SOLID_HU + rng.normal(0.0, SOLID_NOISE_SIGMA,
                                         size=int(mask.sum()))
        n_spicules = int(rng.integers(6, 11))
        for _ in range(n_spicules):
            direction = rng.normal(0.0, 1.0, size=3)
            norm = np.linalg.norm(direction)
            direction = direction / norm if norm > 1e-9 else np.array([1.0, 0, 0])
            length = rng.uniform(*SPICULE_LEN)
            t0 = 1.0 / np.sqrt(((direction / axes) ** 2).sum())
            for t in np.arange(t0, t0 + length, 0.4):
                p = np.rint(np.array(center) + t * direction).astype(np.int64)
                if np.all((p >= 0) & (p < side)) and not mask[tuple(p)]:
                    mask[tuple(p)] = True
                    hu[tuple(p)] = SOLID_HU
    return hu, mask


def _sample_center(rng: np.random.Generator, reach: float) -> np.ndarray | None:
    """A point of the host lung whose `reach`-ball fits per-axis."""
    semi = np.array(LUNG1_SEMI) - reach
    if semi.min() <= 0:
        return None
    center = np.array(LUNG1_CENTER)
    for _ in range(100):
        p = center + rng.uniform(-1.0, 1.0, size=3) * semi
        if (((p - center) / semi) ** 2).sum() <= 1.0:
            return p
    return None


def gen_sample(idx: int, cls: int, seed: int, split: str) -> PhantomSample:
    """Build one volume; a pure function of (seed, idx)."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed) * np.uint64(2**32) + np.uint64(idx)))
    shape = (SIDE, SIDE, SIDE)
    vol = np.full(shape, AIR_HU, dtype=np.float64)
    vol[_ellipsoid_mask(shape, BODY_CENTER, BODY_SEMI)] = BODY_HU
    for lung_center, lung_semi in ((LUNG1_CENTER, LUNG1_SEMI),
                                   (LUNG2_CENTER, LUNG2_SEMI)):
        lung = _ellipsoid_mask(shape, lung_center, lung_semi)
        vol[lung] = LUNG_HU + rng.normal(0.0, LUNG_NOISE_SIGMA,
                                         size=int(lung.sum()))

    radius_vox = rng.uniform(*RADIUS_MM) / SPACING[0]
    mask_vol = np.zeros(shape, dtype=np.int16)
    while True:
        hu_patch, mask_patch = gen_nodule(cls, radius_vox, rng)
        pad = hu_patch.shape[0] // 2
        local = np.argwhere(mask_patch)
        reach = float(np.abs(local - pad).max()) + 1.0
        placed = False
        for _ in range(50):
            center = _sample_center(rng, reach)
            if center is None:
                break
            center_vox = np.rint(center).astype(np.int64)
            points = local - pad + center_vox
            if np.all(_inside_ellipsoid(points.astype(np.float64),
                                        LUNG1_CENTER, LUNG1_SEMI)):
                coords = tuple(points.T)
                vol[coords] = hu_patch[tuple(local.T)]
                mask_vol[coords] = 1
                placed = True
                break
        if placed:
            break
        radius_vox *= 0.9   # geometry too tight; retry smaller

    patient = f"P{idx:04d}"
    annotation = NoduleAnnotation(
        patient_id=patient, scan_path=f"{patient}.mhd",
        center=(int(center_vox[0]), int(center_vox[1]), int(center_vox[2])),
        label=cls)
    voxels = np.clip(np.rint(vol), *HU_CLIP).astype(np.int16)
    volume = Volume(dims=shape, spacing=SPACING, origin=(0.0, 0.0, 0.0),
                    voxels=voxels)
    mask = Volume(dims=shape, spacing=SPACING, origin=(0.0, 0.0, 0.0),
                 voxels=mask_vol)
    return PhantomSample(annotation=annotation, volume=volume, mask=mask,
                         split=split)


def split_plan(count_per_class: int) -> list[str]:
    """Per-class split labels in generation order (6:2:2, floor val/test)."""
    n_val = count_per_class * 2 // 10
    n_test = count_per_class * 2 // 10
    n_train = count_per_class - n_val - n_test
    return ["train"] * n_train + ["val"] * n_val + ["test"] * n_test


def sample_layout(count_per_class: int) -> list[tuple[int, int, str]]:
    """(idx, class, split) for every sample; classes interleave by index."""
    plans = {c: split_plan(count_per_class) for c in range(N_CLASSES)}
    seen = {c: 0 for c in range(N_CLASSES)}
    layout = []
    for idx in range(N_CLASSES * count_per_class):
        cls = idx % N_CLASSES
        layout.append((idx, cls, plans[cls][seen[cls]]))
        seen[cls] += 1
    return layout


def gen_dataset(count_per_class: int, seed: int) -> list[PhantomSample]:
    """In-memory corpus; suitable for small counts."""
    if count_per_class < 1:
        raise ValueError("count_per_class must be >= 1")
    return [gen_sample(idx, cls, seed, split)
            for idx, cls, split in sample_layout(count_per_class)]


def splits_csv(samples: list[PhantomSample]) -> str:
    lines = ["nodule_id,patient_id,split"]
    for s in samples:
        lines.append(f"{s.annotation.nodule_id},{s.annotation.patient_id},{s.split}")
    return "\n".join(lines) + "\n"


def read_splits(text: str) -> dict[str, str]:
    """nodule_id -> split name."""
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows or rows[0] != ["nodule_id", "patient_id", "split"]:
        raise AnnotationParseError("bad split manifest header")
    out = {}
    for row in rows[1:]:
        if len(row) != 3 or row[2] not in ("train", "val", "test"):
            raise AnnotationParseError(f"bad split row {row}")
        out[row[0]] = row[2]
    return out


def write_dataset(count_per_class: int, seed: int, out_dir: str | Path
                  ) -> list[NoduleAnnotation]:
    """Stream the corpus to disk one sample at a time.

    Emits P####.mhd/.raw, P####_mask.mhd/.raw, annotations.csv and
    splits.csv; returns the annotations.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    annotations = []
    split_lines = ["nodule_id,patient_id,split"]
    for idx, cls, split in sample_layout(count_per_class):
        sample = gen_sample(idx, cls, seed, split)
        patient = sample.annotation.patient_id
        write_volume(sample.volume, out / f"{patient}.mhd")
        write_volume(sample.mask, out / f"{patient}_mask.mhd")
        annotations.append(sample.annotation)
        split_lines.append(
            f"{sample.annotation.nodule_id},{patient},{split}")
    write_annotations(annotations, out / "annotations.csv")
    (out / "splits.csv").write_text("\n".join(split_lines) + "\n",
                                    encoding="utf-8")
    return annotations
