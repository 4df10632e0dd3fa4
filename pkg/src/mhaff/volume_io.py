"""Readers and writers for CT volumes, annotations, feature tables and checkpoints.

Volumes live on disk as MetaImage pairs (.mhd header + .raw payload,
MET_SHORT little-endian). Other modules never touch the raw formats
directly; everything round-trips bit-exactly through this module.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AnnotationParseError,
    BadMagic,
    DuplicateNodule,
    HeaderParseError,
    MissingKey,
    NonFiniteTensor,
    OutOfRangeHU,
    SizeMismatch,
    TruncatedPayload,
    UnsupportedElementType,
)

HU_MIN = -2048
HU_MAX = 4095

CHECKPOINT_MAGIC = b"MHAFF001"

#: CSV cell used for features that could not be computed (degenerate region).
SENTINEL = "NA"


@dataclass
class VolumeHeader:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data_file: str


@dataclass
class Volume:
    """3D HU grid. voxels[i, j, k] follows x-fastest disk layout."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    voxels: np.ndarray  # shape (nx, ny, nz)

    def voxel(self, i: int, j: int, k: int) -> float:
        return self.voxels[i, j, k]


@dataclass(frozen=True)
class NoduleAnnotation:
    patient_id: str
    scan_path: str
    center: tuple[int, int, int]
    label: int

    @property
    def nodule_id(self) -> str:
        cx, cy, cz = self.center
        return f"{self.patient_id}_{cx}_{cy}_{cz}"


def parse_mhd(header_text: str) -> VolumeHeader:
    """Parse a MetaImage header.

    Required keys: DimSize, ElementSpacing, ElementType (MET_SHORT only),
    ElementDataFile. Offset defaults to (0, 0, 0).
    """
    fields: dict[str, str] = {}
    for line in header_text.splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise HeaderParseError(f"not a key = value line: {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()

    for required in ("DimSize", "ElementSpacing", "ElementType", "ElementDataFile"):
        if required not in fields:
            raise MissingKey(required)

    if fields["ElementType"] != "MET_SHORT":
        raise UnsupportedElementType(fields["ElementType"])

    dim_parts = fields["DimSize"].split()
    if len(dim_parts) != 3:
        raise HeaderParseError(f"DimSize needs 3 entries, got {fields['DimSize']!r}")
    try:
        dims = tuple(int(p) for p in dim_parts)
    except ValueError as exc:
        raise HeaderParseError(f"non-integer DimSize: {fields['DimSize']!r}") from exc
    if any(d < 1 for d in dims):
        raise HeaderParseError(f"DimSize entries must be >= 1: {dims}")

    try:
        spacing = tuple(float(p) for p in fields["ElementSpacing"].split())
    except ValueError as exc:
        raise HeaderParseError(f"bad ElementSpacing: {fields['ElementSpacing']!r}") from exc
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise HeaderParseError(f"ElementSpacing must be 3 positive floats: {spacing}")

    origin = (0.0, 0.0, 0.0)
    if "Offset" in fields:
        try:
            origin = tuple(float(p) for p in fields["Offset"].split())
        except ValueError as exc:
            raise HeaderParseError(f"bad Offset: {fields['Offset']!r}") from exc
        if len(origin) != 3:
            raise HeaderParseError(f"Offset must have 3 entries: {origin}")

    return VolumeHeader(dims=dims, spacing=spacing, origin=origin,
                        data_file=fields["ElementDataFile"])


def load_volume(header: VolumeHeader, raw_bytes: bytes) -> Volume:
    """Decode a raw MET_SHORT payload against its header.

    voxel(i, j, k) sits at byte offset 2*(i + nx*j + nx*ny*k).
    """
    nx, ny, nz = header.dims
    expected = nx * ny * nz * 2
    if len(raw_bytes) != expected:
        raise SizeMismatch(
            f"raw payload is {len(raw_bytes)} bytes, expected {expected} "
            f"for dims {header.dims}")
    flat = np.frombuffer(raw_bytes, dtype="<i2")
    lo, hi = int(flat.min()), int(flat.max())
    if lo < HU_MIN or hi > HU_MAX:
        raise OutOfRangeHU(f"HU values [{lo}, {hi}] outside [{HU_MIN}, {HU_MAX}]")
    voxels = flat.reshape((nx, ny, nz), order="F")
    return Volume(dims=header.dims, spacing=header.spacing,
                  origin=header.origin, voxels=voxels)


def read_volume(mhd_path: str | Path) -> Volume:
    mhd_path = Path(mhd_path)
    header = parse_mhd(mhd_path.read_text(encoding="ascii"))
    raw_path = mhd_path.parent / header.data_file
    return load_volume(header, raw_path.read_bytes())


def write_volume(volume: Volume, mhd_path: str | Path) -> None:
    """Write a volume as a .mhd/.raw pair next to each other."""
    mhd_path = Path(mhd_path)
    raw_name = mhd_path.with_suffix(".raw").name
    voxels = np.asarray(volume.voxels)
    if voxels.shape != tuple(volume.dims):
        raise SizeMismatch(f"voxel array {voxels.shape} vs dims {volume.dims}")
    rounded = np.rint(voxels)
    lo, hi = rounded.min(), rounded.max()
    if lo < HU_MIN or hi > HU_MAX:
        raise OutOfRangeHU(f"HU values [{lo}, {hi}] outside [{HU_MIN}, {HU_MAX}]")
    header = (
        f"ObjectType = Image\n"
        f"NDims = 3\n"
        f"DimSize = {volume.dims[0]} {volume.dims[1]} {volume.dims[2]}\n"
        f"ElementSpacing = {volume.spacing[0]:g} {volume.spacing[1]:g} {volume.spacing[2]:g}\n"
        f"Offset = {volume.origin[0]:g} {volume.origin[1]:g} {volume.origin[2]:g}\n"
        f"ElementType = MET_SHORT\n"
        f"ElementByteOrderMSB = False\n"
        f"ElementDataFile = {raw_name}\n"
    )
    mhd_path.write_text(header, encoding="ascii")
    flat = np.asfortranarray(rounded.astype("<i2")).flatten(order="F")
    (mhd_path.parent / raw_name).write_bytes(flat.tobytes())


ANNOTATION_COLUMNS = ["patient_id", "scan_path", "cx", "cy", "cz", "label"]


def parse_annotations(csv_text: str) -> list[NoduleAnnotation]:
    """Parse the annotations CSV (header mandatory, order preserved)."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise AnnotationParseError("empty annotations file") from None
    if header != ANNOTATION_COLUMNS:
        raise AnnotationParseError(
            f"annotation header must be {','.join(ANNOTATION_COLUMNS)}, got {','.join(header)}")

    out: list[NoduleAnnotation] = []
    seen: set[tuple[str, tuple[int, int, int]]] = set()
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise AnnotationParseError(f"row {row_num}: expected 6 fields, got {len(row)}")
        patient_id, scan_path = row[0], row[1]
        try:
            center = (int(row[2]), int(row[3]), int(row[4]))
            label = int(row[5])
        except ValueError as exc:
            raise AnnotationParseError(f"row {row_num}: non-integer field") from exc
        if label < 0:
            raise AnnotationParseError(f"row {row_num}: negative label {label}")
        key = (patient_id, center)
        if key in seen:
            raise DuplicateNodule(f"duplicate nodule {patient_id} at {center}")
        seen.add(key)
        out.append(NoduleAnnotation(patient_id=patient_id, scan_path=scan_path,
                                    center=center, label=label))
    return out


def read_annotations(path: str | Path) -> list[NoduleAnnotation]:
    return parse_annotations(Path(path).read_text(encoding="utf-8"))


def write_annotations(annotations: list[NoduleAnnotation], path: str | Path) -> None:
    lines = [",".join(ANNOTATION_COLUMNS)]
    for a in annotations:
        cx, cy, cz = a.center
        lines.append(f"{a.patient_id},{a.scan_path},{cx},{cy},{cz},{a.label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class InvalidTableError(AnnotationParseError):
    pass


@dataclass
class FeatureTable:
    """Per-nodule feature values. Failed features hold None (written as "NA")."""

    feature_names: list[str]
    nodule_ids: list[str] = field(default_factory=list)
    patient_ids: list[str] = field(default_factory=list)
    rows: list[list[float | None]] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise InvalidTableError("duplicate feature names")

    def append(self, nodule_id: str, patient_id: str,
               values: list[float | None], label: int) -> None:
        if len(values) != len(self.feature_names):
            raise InvalidTableError(
                f"row width {len(values)} vs {len(self.feature_names)} columns")
        self.nodule_ids.append(nodule_id)
        self.patient_ids.append(patient_id)
        self.rows.append(list(values))
        self.labels.append(label)

    def column(self, name: str) -> list[float | None]:
        idx = self.feature_names.index(name)
        return [row[idx] for row in self.rows]

    def write_csv(self, path: str | Path, config_text: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if config_text:
                for line in config_text.strip().splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["nodule_id", "patient_id"] + self.feature_names + ["label"])
            for nid, pid, row, label in zip(self.nodule_ids, self.patient_ids,
                                            self.rows, self.labels):
                cells = [SENTINEL if v is None else repr(float(v)) for v in row]
                writer.writerow([nid, pid] + cells + [label])

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = (row for row in csv.reader(fh)
                      if row and not row[0].startswith("#"))
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidTableError("empty feature table") from None
            if len(header) < 3 or header[0] != "nodule_id" or header[1] != "patient_id" \
                    or header[-1] != "label":
                raise InvalidTableError("feature table header must be "
                                        "nodule_id,patient_id,<features...>,label")
            names = header[2:-1]
            table = cls(feature_names=names)
            for row_num, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise InvalidTableError(f"row {row_num}: width {len(row)} vs header {len(header)}")
                values = [None if c == SENTINEL else float(c) for c in row[2:-1]]
                table.append(row[0], row[1], values, int(row[-1]))
            return table


def _pack_str(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack("<I", len(data)) + data


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.payload):
            raise TruncatedPayload(f"needed {n} bytes at offset {self.pos}, "
                                   f"payload has {len(self.payload)}")
        chunk = self.payload[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def take_u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def take_str(self) -> str:
        return self.take(self.take_u32()).decode("utf-8")


def write_checkpoint(params: dict[str, np.ndarray], config_text: str) -> bytes:
    """Serialize named float32 tensors plus the effective config.

    Tensor order is lexicographic by name so identical parameter sets
    always produce identical bytes.
    """
    chunks = [CHECKPOINT_MAGIC, _pack_str(config_text), struct.pack("<I", len(params))]
    for name in sorted(params):
        # ascontiguousarray would silently promote rank-0 to rank-1
        arr = np.asarray(params[name], dtype="<f4")
        if arr.ndim:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteTensor(f"tensor {name!r} holds NaN/inf")
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def read_checkpoint(payload: bytes) -> tuple[dict[str, np.ndarray], str]:
    if payload[:8] != CHECKPOINT_MAGIC:
        raise BadMagic(f"bad checkpoint magic {payload[:8]!r}")
    reader = _Reader(payload)
    reader.take(8)
    config_text = reader.take_str()
    count = reader.take_u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take_str()
        rank = reader.take_u32()
        dims = tuple(reader.take_u32() for _ in range(rank))
        n_values = int(np.prod(dims)) if rank else 1
        data = reader.take(n_values * 4)
        params[name] = np.frombuffer(data, dtype="<f4").reshape(dims).copy()
    if reader.pos != len(payload):
        raise TruncatedPayload(f"{len(payload) - reader.pos} trailing bytes")
    return params, config_text


def write_checkpoint_file(params: dict[str, np.ndarray], config_text: str,
                          path: str | Path) -> None:
    Path(path).write_bytes(write_checkpoint(params, config_text))


def read_checkpoint_file(path: str | Path) -> tuple[dict[str, np.ndarray], str]:
    return read_checkpoint(Path(path).read_bytes())
