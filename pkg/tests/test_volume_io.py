import numpy as np
import pytest

from mhaff.errors import (
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
from mhaff.volume_io import (
    FeatureTable,
    InvalidTableError,
    NoduleAnnotation,
    Volume,
    load_volume,
    parse_annotations,
    parse_mhd,
    read_annotations,
    read_checkpoint,
    read_volume,
    write_annotations,
    write_checkpoint,
    write_volume,
)

HEADER = (
    "ObjectType = Image\n"
    "NDims = 3\n"
    "DimSize = 3 2 2\n"
    "ElementSpacing = 0.5 0.5 1.0\n"
    "ElementType = MET_SHORT\n"
    "ElementDataFile = vol.raw\n"
)


def test_parse_mhd_basic():
    h = parse_mhd(HEADER)
    assert h.dims == (3, 2, 2)
    assert h.spacing == (0.5, 0.5, 1.0)
    assert h.origin == (0.0, 0.0, 0.0)
    assert h.data_file == "vol.raw"


def test_parse_mhd_offset():
    h = parse_mhd(HEADER + "Offset = 1 2 -3\n")
    assert h.origin == (1.0, 2.0, -3.0)


def test_parse_mhd_errors():
    with pytest.raises(MissingKey):
        parse_mhd(HEADER.replace("DimSize = 3 2 2\n", ""))
    with pytest.raises(UnsupportedElementType):
        parse_mhd(HEADER.replace("MET_SHORT", "MET_FLOAT"))
    with pytest.raises(HeaderParseError):
        parse_mhd(HEADER.replace("3 2 2", "3 2"))
    with pytest.raises(HeaderParseError):
        parse_mhd(HEADER.replace("3 2 2", "3 2 zero"))
    with pytest.raises(HeaderParseError):
        parse_mhd(HEADER + "garbage line without equals\n")


def test_load_volume_x_fastest():
    # payload little-endian shorts 0..11; voxel(i,j,k) at offset i + 3j + 6k
    raw = np.arange(12, dtype="<i2").tobytes()
    vol = load_volume(parse_mhd(HEADER), raw)
    assert vol.voxel(0, 0, 0) == 0
    assert vol.voxel(1, 0, 0) == 1
    assert vol.voxel(0, 1, 0) == 3
    assert vol.voxel(0, 0, 1) == 6
    assert vol.voxel(2, 1, 1) == 11


def test_load_volume_size_and_range():
    with pytest.raises(SizeMismatch):
        load_volume(parse_mhd(HEADER), b"\x00" * 10)
    bad = np.full(12, 5000, dtype="<i2").tobytes()
    with pytest.raises(OutOfRangeHU):
        load_volume(parse_mhd(HEADER), bad)


def test_volume_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    voxels = rng.integers(-1000, 400, size=(5, 4, 3)).astype(np.int16)
    vol = Volume(dims=(5, 4, 3), spacing=(0.625, 0.625, 0.625),
                 origin=(0.0, 0.0, 0.0), voxels=voxels)
    write_volume(vol, tmp_path / "v.mhd")
    back = read_volume(tmp_path / "v.mhd")
    assert back.dims == vol.dims
    assert back.spacing == vol.spacing
    assert np.array_equal(back.voxels, voxels)
    # writing again produces identical bytes
    first = (tmp_path / "v.raw").read_bytes()
    write_volume(back, tmp_path / "v.mhd")
    assert (tmp_path / "v.raw").read_bytes() == first


def test_annotations_round_trip(tmp_path):
    anns = [
        NoduleAnnotation("P01", "P01.mhd", (10, 20, 30), 0),
        NoduleAnnotation("P02", "P02.mhd", (5, 6, 7), 2),
    ]
    write_annotations(anns, tmp_path / "a.csv")
    back = read_annotations(tmp_path / "a.csv")
    assert back == anns
    assert back[0].nodule_id == "P01_10_20_30"


def test_annotations_errors():
    with pytest.raises(AnnotationParseError):
        parse_annotations("")
    with pytest.raises(AnnotationParseError):
        parse_annotations("wrong,header\n")
    good = "patient_id,scan_path,cx,cy,cz,label\n"
    with pytest.raises(AnnotationParseError):
        parse_annotations(good + "P01,P01.mhd,1,2,x,0\n")
    with pytest.raises(AnnotationParseError):
        parse_annotations(good + "P01,P01.mhd,1,2,3,-1\n")
    with pytest.raises(DuplicateNodule):
        parse_annotations(good + "P01,P01.mhd,1,2,3,0\nP01,P01.mhd,1,2,3,1\n")


def test_feature_table_round_trip(tmp_path):
    table = FeatureTable(feature_names=["a_b_c", "d_e_f"])
    table.append("n1", "p1", [1.5, None], 0)
    table.append("n2", "p2", [-0.25, 3.0], 2)
    table.write_csv(tmp_path / "t.csv")
    back = FeatureTable.read_csv(tmp_path / "t.csv")
    assert back.feature_names == table.feature_names
    assert back.nodule_ids == ["n1", "n2"]
    assert back.rows == [[1.5, None], [-0.25, 3.0]]
    assert back.labels == [0, 2]
    text = (tmp_path / "t.csv").read_text()
    assert "NA" in text


def test_feature_table_config_comments(tmp_path):
    table = FeatureTable(feature_names=["x_y_z"])
    table.append("n1", "p1", [2.0], 1)
    table.write_csv(tmp_path / "t.csv", config_text="m = 3\nseed = 0\n")
    text = (tmp_path / "t.csv").read_text()
    assert text.startswith("# m = 3\n# seed = 0\n")
    back = FeatureTable.read_csv(tmp_path / "t.csv")
    assert back.rows == [[2.0]]


def test_feature_table_errors():
    with pytest.raises(InvalidTableError):
        FeatureTable(feature_names=["dup", "dup"])
    table = FeatureTable(feature_names=["a", "b"])
    with pytest.raises(InvalidTableError):
        table.append("n", "p", [1.0], 0)


def test_feature_table_float_fidelity(tmp_path):
    # repr round-trip keeps doubles exact
    vals = [0.1, 1 / 3, 1e-17, 12345.678901234567]
    table = FeatureTable(feature_names=[f"f{i}_x_y" for i in range(len(vals))])
    table.append("n1", "p1", list(vals), 0)
    table.write_csv(tmp_path / "t.csv")
    back = FeatureTable.read_csv(tmp_path / "t.csv")
    assert back.rows[0] == vals


def test_checkpoint_round_trip():
    params = {
        "w": np.arange(6, dtype=np.float32).reshape(2, 3),
        "b": np.array([1.5], dtype=np.float32),
        "scalar": np.array(2.0, dtype=np.float32),
    }
    payload = write_checkpoint(params, "m = 3\n")
    back, config = read_checkpoint(payload)
    assert config == "m = 3\n"
    assert set(back) == set(params)
    for name in params:
        assert np.array_equal(back[name], params[name])
        assert back[name].shape == params[name].shape


def test_checkpoint_deterministic_bytes():
    a = {"x": np.ones(3, dtype=np.float32), "y": np.zeros(2, dtype=np.float32)}
    b = {"y": np.zeros(2, dtype=np.float32), "x": np.ones(3, dtype=np.float32)}
    assert write_checkpoint(a, "c") == write_checkpoint(b, "c")


def test_checkpoint_errors():
    with pytest.raises(BadMagic):
        read_checkpoint(b"NOTMAGIC" + b"\x00" * 16)
    payload = write_checkpoint({"x": np.ones(4, dtype=np.float32)}, "c")
    with pytest.raises(TruncatedPayload):
        read_checkpoint(payload[:-3])
    with pytest.raises(TruncatedPayload):
        read_checkpoint(payload + b"\x00")
    with pytest.raises(NonFiniteTensor):
        write_checkpoint({"x": np.array([np.nan], dtype=np.float32)}, "c")
