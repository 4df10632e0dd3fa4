"""Attention summaries, class activation maps, PGM export."""

import numpy as np
import pytest

from mhaff import fusion_model as fm
from mhaff.errors import LabelOutOfRange
from mhaff.explain import (
    _bilinear_upsample4, export_attention, grad_cam, to_pgm,
)
from mhaff.train_eval import SampleSet


def _setup(seed=0, m=3, h=2, n=3, k=4):
    config = fm.ModelConfig(m=m, h=h, n=n, k=k, seed=seed)
    params = fm.init_params(config)
    rng = np.random.default_rng(seed + 1)
    n_samples = 9
    samples = SampleSet(
        ids=[f"s{i}" for i in range(n_samples)],
        labels=rng.integers(0, m, size=n_samples),
        x_r=rng.normal(size=(n_samples, config.radiomics_width)),
        pixels=rng.normal(size=(n_samples, n, 32, 32)).astype(np.float64),
    )
    fm.set_norm_stats(params, samples.x_r.mean(axis=0), samples.x_r.std(axis=0))
    return config, params, samples


def test_attention_summary_weights_complement():
    config, params, samples = _setup()
    summary = export_attention(params, config, samples)
    assert summary.h == config.h
    assert summary.classes == sorted(set(samples.labels.tolist()))
    for (head, cls), a_r in summary.per_head.items():
        assert 0.0 <= a_r <= 1.0
        assert 0 <= head < config.h
    assert len(summary.per_head) == config.h * len(summary.classes)
    for cls, a_r in summary.per_class.items():
        assert 0.0 <= a_r <= 1.0
        per_head = [summary.per_head[(head, cls)] for head in range(config.h)]
        assert abs(a_r - np.mean(per_head)) < 1e-12


def test_attention_summary_batch_invariance():
    config, params, samples = _setup()
    a = export_attention(params, config, samples, batch_size=2)
    b = export_attention(params, config, samples, batch_size=16)
    assert a.per_head == b.per_head
    assert a.per_class == b.per_class


def test_attention_summary_csv():
    config, params, samples = _setup()
    summary = export_attention(params, config, samples)
    lines = summary.to_csv().splitlines()
    assert lines[0] == "head,class,radiomics_weight,deep_weight"
    assert len(lines) == 1 + config.h * len(summary.classes) + len(summary.classes)
    for line in lines[1:]:
        head, cls, a_r, a_d = line.split(",")
        assert head == "all" or 0 <= int(head) < config.h
        # the two columns are exact complements
        assert abs(float(a_r) + float(a_d) - 1.0) < 1e-15


def test_bilinear_upsample_constant_and_range():
    const = np.full((2, 8, 8), 0.7)
    up = _bilinear_upsample4(const)
    assert up.shape == (2, 32, 32)
    assert np.allclose(up, 0.7)
    rng = np.random.default_rng(1)
    maps = rng.uniform(size=(3, 8, 8))
    up = _bilinear_upsample4(maps)
    assert up.min() >= maps.min() - 1e-12 and up.max() <= maps.max() + 1e-12
    # coarse cells survive at their centers: output pixel (4i+1..4i+2) blends
    # around cell i, and each 4x4 block mean tracks the source cell
    block = up.reshape(3, 8, 4, 8, 4).mean(axis=(2, 4))
    assert np.corrcoef(block.ravel(), maps.ravel())[0, 1] > 0.95


def test_grad_cam_shape_and_range():
    config, params, samples = _setup()
    for target in range(config.m):
        heat = grad_cam(params, config, samples.x_r[0], samples.pixels[0],
                        target)
        assert heat.shape == (config.n, 32, 32)
        assert heat.min() >= 0.0 and heat.max() <= 1.0 + 1e-12
        assert np.isfinite(heat).all()


def test_grad_cam_target_sensitivity():
    config, params, samples = _setup()
    a = grad_cam(params, config, samples.x_r[0], samples.pixels[0], 0)
    b = grad_cam(params, config, samples.x_r[0], samples.pixels[0], 1)
    assert not np.allclose(a, b)


def test_grad_cam_deterministic():
    config, params, samples = _setup()
    a = grad_cam(params, config, samples.x_r[2], samples.pixels[2], 1)
    b = grad_cam(params, config, samples.x_r[2], samples.pixels[2], 1)
    assert np.array_equal(a, b)


def test_grad_cam_leaves_params_clean():
    config, params, samples = _setup()
    grad_cam(params, config, samples.x_r[0], samples.pixels[0], 0)
    assert all(p.grad is None for p in params.values())


def test_grad_cam_rejects_bad_target():
    config, params, samples = _setup()
    with pytest.raises(LabelOutOfRange):
        grad_cam(params, config, samples.x_r[0], samples.pixels[0], config.m)
    with pytest.raises(LabelOutOfRange):
        grad_cam(params, config, samples.x_r[0], samples.pixels[0], -1)


def test_to_pgm_format():
    rng = np.random.default_rng(5)
    heat = rng.uniform(size=(32, 32))
    text = to_pgm(heat, comment="slice 3")
    lines = text.splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "# slice 3"
    assert lines[2] == "32 32"
    assert lines[3] == "255"
    assert len(lines) == 4 + 32
    values = [int(v) for row in lines[4:] for v in row.split()]
    assert len(values) == 32 * 32
    assert min(values) >= 0 and max(values) <= 255
    expected = np.rint(heat * 255).astype(int)
    assert np.array_equal(np.array(values).reshape(32, 32), expected)


def test_to_pgm_no_comment_and_clipping():
    heat = np.array([[-0.5, 0.0], [1.0, 2.0]])
    lines = to_pgm(heat).splitlines()
    assert lines[1] == "2 2"
    assert lines[3] == "0 0"
    assert lines[4] == "255 255"
