"""Dataset assembly shared by the command-line steps.

The on-disk layout: a data directory holds volumes, annotations.csv and
splits.csv; a work directory accumulates rois.bin, roi_masks.bin,
features.csv, screening.csv, selected.txt, model.ckpt and reports.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Config, check_structural_match
from .errors import (
    AnnotationParseError,
    EmptySplit,
    InvalidFeatureValue,
    LabelOutOfRange,
)
from .phantom import read_splits
from .preprocess import (
    compute_lung_mask,
    extract_roi_stack,
    normalize_hu,
    resample_trilinear,
)
from .radiomics import extract_all
from .screening import read_selected_list
from .train_eval import SampleSet
from .volume_io import (
    FeatureTable,
    NoduleAnnotation,
    Volume,
    read_annotations,
    read_checkpoint_file,
    read_volume,
    write_checkpoint_file,
)

ROIS_FILE = "rois.bin"
ROI_MASKS_FILE = "roi_masks.bin"
FEATURES_FILE = "features.csv"
SCREEN_FILE = "screening.csv"
SELECTED_FILE = "selected.txt"
CHECKPOINT_FILE = "model.ckpt"
CURVE_FILE = "curve.csv"
SPLITS = ("train", "val", "test")


def load_corpus(data_dir: str | Path) -> tuple[list[NoduleAnnotation], dict[str, str]]:
    data = Path(data_dir)
    annotations = read_annotations(data / "annotations.csv")
    splits = read_splits((data / "splits.csv").read_text(encoding="utf-8"))
    for a in annotations:
        if a.nodule_id not in splits:
            raise AnnotationParseError(f"{a.nodule_id} missing from splits.csv")
    return annotations, splits


def rescaled_annotation(annotation: NoduleAnnotation, old_spacing,
                        new_spacing) -> NoduleAnnotation:
    """Move the center into the resampled voxel grid."""
    center = tuple(
        int(round(c * old_spacing[axis] / new_spacing[axis]))
        for axis, c in enumerate(annotation.center))
    return replace(annotation, center=center)


def preprocess_corpus(data_dir: str | Path, config: Config
                      ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """ROI stacks (and nodule-mask stacks where masks exist) per nodule."""
    data = Path(data_dir)
    annotations, _ = load_corpus(data)
    target = (config.spacing,) * 3
    rois: dict[str, np.ndarray] = {}
    roi_masks: dict[str, np.ndarray] = {}
    for annotation in annotations:
        volume = read_volume(data / annotation.scan_path)
        resampled = resample_trilinear(volume, target)
        local = rescaled_annotation(annotation, volume.spacing, target)
        normalized = normalize_hu(resampled, (config.hu_min, config.hu_max))
        stack = extract_roi_stack(normalized, local, config.n)
        rois[annotation.nodule_id] = stack.pixels

        mask_path = data / f"{annotation.patient_id}_mask.mhd"
        if mask_path.exists():
            mask_vol = read_volume(mask_path)
            mask_res = resample_trilinear(mask_vol, target)
            binary = Volume(dims=mask_res.dims, spacing=mask_res.spacing,
                            origin=mask_res.origin,
                            voxels=(mask_res.voxels > 0.5).astype(np.float32))
            roi_masks[annotation.nodule_id] = extract_roi_stack(
                binary, local, config.n).pixels
    return rois, roi_masks


def write_roi_files(rois: dict[str, np.ndarray], roi_masks: dict[str, np.ndarray],
                    work_dir: str | Path, config: Config) -> None:
    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)
    write_checkpoint_file(rois, config.to_text(), work / ROIS_FILE)
    if roi_masks:
        write_checkpoint_file(roi_masks, config.to_text(), work / ROI_MASKS_FILE)


def extract_features_corpus(data_dir: str | Path, config: Config) -> FeatureTable:
    """The full radiomics table over every annotated nodule."""
    data = Path(data_dir)
    annotations, _ = load_corpus(data)
    target = (config.spacing,) * 3
    table: FeatureTable | None = None
    for annotation in annotations:
        volume = read_volume(data / annotation.scan_path)
        resampled = resample_trilinear(volume, target)
        local = rescaled_annotation(annotation, volume.spacing, target)
        lung = compute_lung_mask(resampled)
        vector = extract_all(resampled, local, lung, n_bins=config.bins)
        if table is None:
            table = FeatureTable(feature_names=vector.names)
        table.append(annotation.nodule_id, annotation.patient_id,
                     vector.values, annotation.label)
    if table is None:
        raise EmptySplit("no annotations to extract")
    return table


def split_ids(annotations: list[NoduleAnnotation], splits: dict[str, str]
              ) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {name: [] for name in SPLITS}
    for a in annotations:
        out[splits[a.nodule_id]].append(a.nodule_id)
    return out


def usable_feature_names(table: FeatureTable) -> list[str]:
    """Columns with no NA sentinel anywhere, in table order."""
    keep = []
    for name in table.feature_names:
        if all(v is not None for v in table.column(name)):
            keep.append(name)
    return keep


def feature_matrix(table: FeatureTable, names: list[str]) -> np.ndarray:
    """(rows, len(names)) float64 matrix; NA in a requested column fails."""
    columns = []
    for name in names:
        col = table.column(name)
        if any(v is None for v in col):
            raise InvalidFeatureValue(f"column {name} holds NA values")
        columns.append(np.array(col, dtype=np.float64))
    return np.column_stack(columns)


def build_sample_sets(data_dir: str | Path, work_dir: str | Path,
                      config: Config, include_full: bool = False
                      ) -> tuple[dict[str, SampleSet], dict[str, SampleSet] | None]:
    """SampleSets per split from the work directory's intermediates."""
    work = Path(work_dir)
    annotations, splits = load_corpus(data_dir)
    rois, rois_config = read_checkpoint_file(work / ROIS_FILE)
    check_structural_match(rois_config, config)
    table = FeatureTable.read_csv(work / FEATURES_FILE)
    selected = read_selected_list(
        (work / SELECTED_FILE).read_text(encoding="utf-8"))

    matrix = feature_matrix(table, selected)
    full_matrix = None
    if include_full:
        full_matrix = feature_matrix(table, usable_feature_names(table))
    row_of = {nid: i for i, nid in enumerate(table.nodule_ids)}

    by_split: dict[str, list[NoduleAnnotation]] = {name: [] for name in SPLITS}
    for a in annotations:
        by_split[splits[a.nodule_id]].append(a)

    def pack(rows: list[NoduleAnnotation], mat: np.ndarray) -> SampleSet:
        ids = [a.nodule_id for a in rows]
        labels = np.array([a.label for a in rows], dtype=np.int64)
        if labels.size and labels.max() >= config.m:
            raise LabelOutOfRange(
                f"label {labels.max()} outside {config.m}-class task")
        x_r = np.stack([mat[row_of[i]] for i in ids]) if ids else \
            np.zeros((0, mat.shape[1]))
        pixels = np.stack([rois[i] for i in ids]) if ids else \
            np.zeros((0, config.n, 32, 32), dtype=np.float32)
        return SampleSet(ids=ids, labels=labels, x_r=x_r, pixels=pixels)

    sets = {name: pack(rows, matrix) for name, rows in by_split.items()}
    for name in ("train", "val"):
        if len(sets[name]) == 0:
            raise EmptySplit(f"split {name} is empty")
    full_sets = None
    if include_full:
        full_sets = {name: pack(rows, full_matrix)
                     for name, rows in by_split.items()}
    return sets, full_sets
