"""Explainability exports: attention-weight summaries and class
activation heat maps over ROI slices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fusion_model as fm
from . import tensor_nn as tn
from .errors import LabelOutOfRange
from .tensor_nn import Tensor, backward
from .train_eval import SampleSet


@dataclass
class AttentionSummary:
    """Mean radiomics-token weight per (head, class) and per class."""

    h: int
    classes: list[int]
    per_head: dict[tuple[int, int], float]   # (head, class) -> mean a_r
    per_class: dict[int, float]              # class -> mean a_r over heads

    def to_csv(self) -> str:
        lines = ["head,class,radiomics_weight,deep_weight"]
        for head in range(self.h):
            for cls in self.classes:
                a_r = self.per_head[(head, cls)]
                lines.append(f"{head},{cls},{repr(a_r)},{repr(1.0 - a_r)}")
        for cls in self.classes:
            a_r = self.per_class[cls]
            lines.append(f"all,{cls},{repr(a_r)},{repr(1.0 - a_r)}")
        return "\n".join(lines) + "\n"


def export_attention(params: dict[str, Tensor], config: fm.ModelConfig,
                     samples: SampleSet, batch_size: int = 16) -> AttentionSummary:
    """Average each head's radiomics weight inside every true class."""
    n = len(samples)
    weights = np.zeros((n, config.h), dtype=np.float64)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        tokens, _ = fm.backbone_forward(params, samples.pixels[start:stop])
        out = fm.forward(params, config, samples.x_r[start:stop], tokens)
        weights[start:stop] = out.attention[:, :, 0]   # radiomics token
    labels = np.asarray(samples.labels, dtype=np.int64)
    classes = sorted(set(labels.tolist()))
    per_head = {}
    per_class = {}
    for cls in classes:
        rows = weights[labels == cls]
        for head in range(config.h):
            per_head[(head, cls)] = float(rows[:, head].mean())
        per_class[cls] = float(rows.mean())
    return AttentionSummary(h=config.h, classes=classes,
                            per_head=per_head, per_class=per_class)


def _bilinear_upsample4(maps: np.ndarray) -> np.ndarray:
    """(n, 8, 8) -> (n, 32, 32) bilinear, half-pixel centers."""
    n, h, w = maps.shape
    out_h, out_w = h * 4, w * 4
    ys = (np.arange(out_h) + 0.5) / 4.0 - 0.5
    xs = (np.arange(out_w) + 0.5) / 4.0 - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = maps[:, y0][:, :, x0] * (1 - wx) + maps[:, y0][:, :, x1] * wx
    bot = maps[:, y1][:, :, x0] * (1 - wx) + maps[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def grad_cam(params: dict[str, Tensor], config: fm.ModelConfig,
             x_r: np.ndarray, pixels: np.ndarray, target: int) -> np.ndarray:
    """Per-slice heat maps in [0,1] for one sample.

    Gradient of the mean-pooled target-class score with respect to the
    pre-pooling activation maps gives channel weights; the weighted,
    rectified channel sum is upsampled to slice size and scaled by its
    own maximum.
    """
    if not 0 <= target < config.m:
        raise LabelOutOfRange(f"target {target} outside [0, {config.m})")
    tokens, pregap = fm.backbone_forward(params, pixels[None])
    out = fm.forward(params, config, x_r[None], tokens, pregap=pregap)
    onehot = np.zeros((1, config.m), dtype=np.float32)
    onehot[0, target] = 1.0
    score = tn.tsum(tn.mul(out.logits, Tensor(onehot)))
    backward(score)

    grads = pregap.grad.reshape(config.n, 64, 8, 8).copy()
    acts = pregap.data.reshape(config.n, 64, 8, 8)
    for p in params.values():
        p.grad = None
    channel_w = grads.mean(axis=(2, 3))                      # (n, 64)
    maps = np.maximum((channel_w[:, :, None, None] * acts).sum(axis=1), 0.0)
    big = _bilinear_upsample4(maps.astype(np.float64))
    peaks = big.reshape(config.n, -1).max(axis=1)
    for i in range(config.n):
        if peaks[i] > 0:
            big[i] /= peaks[i]
    return big


def to_pgm(heatmap: np.ndarray, comment: str | None = None) -> str:
    """One 2D map in [0,1] as an ASCII PGM (P2, maxval 255)."""
    h, w = heatmap.shape
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{w} {h}")
    lines.append("255")
    grey = np.rint(np.clip(heatmap, 0.0, 1.0) * 255).astype(np.int64)
    for row in grey:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"
