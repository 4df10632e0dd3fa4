"""Command-line driver: exit codes, artifact layout, override precedence.

All commands run in process through main(argv); a small shared corpus is
generated once per module.
"""

import json

import numpy as np
import pytest

from mhaff.cli import main
from mhaff.volume_io import FeatureTable, parse_annotations

COUNT = 5        # per class; 9 train / 3 val / 3 test samples overall
SEED = 3


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    data = root / "data"
    work = root / "work"
    assert main(["phantom-gen", "--count", str(COUNT), "--seed", str(SEED),
                 "--out", str(data)]) == 0
    assert main(["preprocess", "--data", str(data), "--work", str(work)]) == 0
    assert main(["radiomics-extract", "--data", str(data),
                 "--work", str(work)]) == 0
    assert main(["screen", "--data", str(data), "--work", str(work)]) == 0
    assert main(["train", "--data", str(data), "--work", str(work),
                 "--seed", "1", "--epochs", "2"]) == 0
    return data, work


def test_no_arguments_fails():
    assert main([]) == 1


def test_unknown_subcommand_fails():
    assert main(["frobnicate"]) == 1


def test_help_exits_clean(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("phantom-gen", "preprocess", "radiomics-extract", "screen",
                "train", "eval", "predict", "explain", "ablate"):
        assert sub in out


def test_train_requires_seed(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path), "--work",
                 str(tmp_path)]) == 1
    assert "--seed" in capsys.readouterr().err


def test_even_slice_count_rejected(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path), "--work", str(tmp_path),
               "--seed", "1", "--n", "6"])
    assert rc == 2
    assert "odd" in capsys.readouterr().err


def test_missing_checkpoint_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    rc = main(["eval", "--data", str(missing), "--work", str(missing),
               "--split", "test"])
    assert rc == 2
    assert str(missing) in capsys.readouterr().err


def test_phantom_gen_layout(tmp_path):
    out = tmp_path / "gen"
    assert main(["phantom-gen", "--count", "2", "--seed", "7",
                 "--out", str(out)]) == 0
    scans = sorted(p.name for p in out.glob("P*.mhd"))
    assert scans == ["P0000.mhd", "P0000_mask.mhd", "P0001.mhd",
                     "P0001_mask.mhd", "P0002.mhd", "P0002_mask.mhd",
                     "P0003.mhd", "P0003_mask.mhd", "P0004.mhd",
                     "P0004_mask.mhd", "P0005.mhd", "P0005_mask.mhd"]
    for name in ("annotations.csv", "splits.csv", "config.txt"):
        assert (out / name).exists()
    assert "seed = 7" in (out / "config.txt").read_text()


def test_phantom_gen_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["phantom-gen", "--count", "1", "--seed", "5",
                     "--out", str(out)]) == 0
    assert ((a / "P0001.raw").read_bytes() == (b / "P0001.raw").read_bytes())
    assert ((a / "annotations.csv").read_bytes()
            == (b / "annotations.csv").read_bytes())


def test_corpus_artifacts(corpus):
    data, work = corpus
    assert (work / "rois.bin").exists()
    assert (work / "features.csv").exists()
    assert (work / "screening.csv").exists()
    assert (work / "selected.txt").exists()
    assert (work / "model.ckpt").exists()
    assert (work / "curve.csv").exists()
    selected = [l for l in (work / "selected.txt").read_text().splitlines()
                if l and not l.startswith("#")]
    assert len(selected) == 70          # k=10 over 7 feature families
    assert len(set(selected)) == 70


def test_features_embed_config(corpus):
    data, work = corpus
    text = (work / "features.csv").read_text()
    head = [l for l in text.splitlines() if l.startswith("# ")]
    assert any("bins = 32" in l for l in head)
    assert any("spacing = 0.625" in l for l in head)
    table = FeatureTable.read_csv(work / "features.csv")
    assert len(table.nodule_ids) == 3 * COUNT


def test_override_beats_config_file(corpus, tmp_path):
    data, work = corpus
    cfg = tmp_path / "run.cfg"
    cfg.write_text("k = 10\n")
    alt = tmp_path / "alt_work"
    alt.mkdir()
    for name in ("rois.bin", "features.csv"):
        (alt / name).write_bytes((work / name).read_bytes())
    assert main(["screen", "--data", str(data), "--work", str(alt),
                 "--config", str(cfg), "--k", "2"]) == 0
    selected = [l for l in (alt / "selected.txt").read_text().splitlines()
                if l and not l.startswith("#")]
    assert len(selected) == 14          # override k=2 wins over file k=10
    assert any("k = 2" in l for l in
               (alt / "screening.csv").read_text().splitlines())


def test_eval_writes_metrics(corpus, capsys):
    data, work = corpus
    assert main(["eval", "--data", str(data), "--work", str(work),
                 "--split", "val"]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out
    payload = json.loads((work / "metrics_val.json").read_text())
    assert payload["task"] == "threeclass"
    assert payload["n_samples"] == COUNT * 3 * 1 // 5
    assert 0.0 <= payload["accuracy"] <= 1.0
    assert "config" in payload


def test_eval_deterministic_bytes(corpus):
    data, work = corpus
    assert main(["eval", "--data", str(data), "--work", str(work),
                 "--split", "test"]) == 0
    first = (work / "metrics_test.json").read_bytes()
    assert main(["eval", "--data", str(data), "--work", str(work),
                 "--split", "test"]) == 0
    assert (work / "metrics_test.json").read_bytes() == first


def test_predict_prints_json(corpus, capsys):
    data, work = corpus
    nid = parse_annotations(
        (data / "annotations.csv").read_text())[0].nodule_id
    assert main(["predict", "--data", str(data), "--work", str(work),
                 "--id", nid]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["nodule_id"] == nid
    assert payload["predicted"] in (0, 1, 2)
    probs = payload["probabilities"]
    assert len(probs) == 3
    assert abs(sum(probs) - 1.0) < 1e-6
    attn = np.array(payload["attention"])
    assert attn.shape[0] == 4           # heads
    assert np.all(attn >= 0)
    assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-6)


def test_predict_unknown_id(corpus, capsys):
    data, work = corpus
    assert main(["predict", "--data", str(data), "--work", str(work),
                 "--id", "P9999"]) == 2
    assert "P9999" in capsys.readouterr().err


def test_explain_outputs(corpus):
    data, work = corpus
    out = work / "explain"
    assert main(["explain", "--data", str(data), "--work", str(work),
                 "--split", "test", "--limit", "2"]) == 0
    summary = [l for l in (out / "attention_summary.csv").read_text()
               .splitlines() if not l.startswith("#")]
    assert summary[0] == "head,class,radiomics_weight,deep_weight"
    for line in summary[1:]:
        parts = line.split(",")
        assert abs(float(parts[2]) + float(parts[3]) - 1.0) < 1e-6
    maps = sorted(out.glob("gradcam_*.pgm"))
    assert maps
    first = maps[0].read_text().splitlines()
    assert first[0] == "P2"
    assert (out / "config.txt").exists()


def test_retrain_in_place_is_bit_identical(corpus, capsys):
    data, work = corpus
    stash = (work / "model.ckpt").read_bytes()
    assert main(["train", "--data", str(data), "--work", str(work),
                 "--seed", "1", "--epochs", "2"]) == 0
    assert "best epoch" in capsys.readouterr().out
    assert (work / "model.ckpt").read_bytes() == stash
