"""Multi-head attentional fusion network and its concatenation baseline.

One forward pass: per-slice CNN embeddings and the reduced radiomics
vector are projected to a common width, n+1 tokens per sample get
per-head softmax attention weights, each head emits class scores from
its convex token blend, and the head scores are mean-pooled into the
final softmax. The baseline replaces attention with concatenation into
a single linear layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_nn as tn
from .errors import (
    ConfigError,
    ConfigMismatch,
    EvenSliceCount,
    InvalidFeatureValue,
    ShapeMismatch,
)
from .tensor_nn import Tensor
from .volume_io import read_checkpoint

NORM_PREFIX = "norm."


@dataclass
class ModelConfig:
    m: int
    h: int = 4
    n: int = 7
    k: int = 10
    d_common: int = 128
    d_attn: int = 8
    backbone_dim: int = 128
    seed: int = 0
    use_attention: bool = True
    uniform_attention: bool = False
    radiomics_width_override: int | None = None

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ConfigError(f"m must be 2 or 3, got {self.m}")
        if self.h < 1:
            raise ConfigError(f"h must be >= 1, got {self.h}")
        if self.n < 1 or self.n % 2 == 0:
            raise EvenSliceCount(f"n must be odd and positive, got {self.n}")
        if min(self.k, self.d_common, self.d_attn, self.backbone_dim) < 1:
            raise ConfigError("k, d_common, d_attn, backbone_dim must be positive")

    @property
    def radiomics_width(self) -> int:
        if self.radiomics_width_override is not None:
            return self.radiomics_width_override
        return 7 * self.k

    @property
    def n_tokens(self) -> int:
        return self.n + 1


@dataclass
class Prediction:
    probabilities: np.ndarray          # (m,)
    attention: np.ndarray | None       # (h, n+1); None for the baseline
    scores: np.ndarray | None          # (h, m)
    fused: np.ndarray | None           # (h, d_common)
    predicted: int


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_params(config: ModelConfig) -> dict[str, Tensor]:
    """Seed-determined parameter set; numpy draws in construction order."""
    rng = np.random.default_rng(config.seed)
    d_c = config.d_common
    d_a = config.d_attn
    d_bb = config.backbone_dim
    width = config.radiomics_width
    params: dict[str, Tensor] = {}

    def par(name: str, data: np.ndarray) -> None:
        params[name] = Tensor(data, requires_grad=True)

    def zeros(name: str, n: int) -> None:
        par(name, np.zeros(n, dtype=np.float32))

    par("backbone.conv1.w", _he_uniform(rng, (16, 1, 3, 3), 1 * 9))
    zeros("backbone.conv1.b", 16)
    par("backbone.conv2.w", _he_uniform(rng, (32, 16, 3, 3), 16 * 9))
    zeros("backbone.conv2.b", 32)
    par("backbone.conv3.w", _he_uniform(rng, (64, 32, 3, 3), 32 * 9))
    zeros("backbone.conv3.b", 64)
    par("backbone.fc.w", _xavier_uniform(rng, (64, d_bb), 64, d_bb))
    zeros("backbone.fc.b", d_bb)

    par("proj.r.w", _xavier_uniform(rng, (width, d_c), width, d_c))
    zeros("proj.r.b", d_c)
    par("proj.r.gain", np.ones(d_c, dtype=np.float32))
    zeros("proj.r.bias", d_c)
    par("proj.d.w", _xavier_uniform(rng, (d_bb, d_c), d_bb, d_c))
    zeros("proj.d.b", d_c)
    par("proj.d.gain", np.ones(d_c, dtype=np.float32))
    zeros("proj.d.bias", d_c)

    if config.use_attention:
        for j in range(config.h):
            par(f"head{j}.attn1.w", _xavier_uniform(rng, (d_c, d_a), d_c, d_a))
            zeros(f"head{j}.attn1.b", d_a)
            par(f"head{j}.attn2.w", _xavier_uniform(rng, (d_a, 1), d_a, 1))
            zeros(f"head{j}.attn2.b", 1)
            par(f"head{j}.score.w", _xavier_uniform(rng, (d_c, config.m), d_c, config.m))
            zeros(f"head{j}.score.b", config.m)
    else:
        cat = config.n_tokens * d_c
        par("simple.score.w", _xavier_uniform(rng, (cat, config.m), cat, config.m))
        zeros("simple.score.b", config.m)

    # radiomics z-score buffers, filled from training statistics
    params[NORM_PREFIX + "mean"] = Tensor(np.zeros(width, dtype=np.float32))
    params[NORM_PREFIX + "std"] = Tensor(np.ones(width, dtype=np.float32))
    return params


def trainable(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: v for k, v in params.items() if not k.startswith(NORM_PREFIX)}


def parameter_count(config: ModelConfig) -> int:
    """Closed-form size of the trainable parameter set."""
    d_c, d_a, d_bb = config.d_common, config.d_attn, config.backbone_dim
    backbone = (16 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 * 9 + 64) \
        + (64 * d_bb + d_bb)
    proj = (config.radiomics_width * d_c + d_c + 2 * d_c) + (d_bb * d_c + d_c + 2 * d_c)
    if config.use_attention:
        head = (d_c * d_a + d_a) + (d_a + 1) + (d_c * config.m + config.m)
        heads = config.h * head
    else:
        heads = config.n_tokens * d_c * config.m + config.m
    return backbone + proj + heads


def set_norm_stats(params: dict[str, Tensor], mean: np.ndarray, std: np.ndarray) -> None:
    safe_std = np.where(std <= 1e-12, 1.0, std)
    params[NORM_PREFIX + "mean"].data = mean.astype(np.float32)
    params[NORM_PREFIX + "std"].data = safe_std.astype(np.float32)


def apply_norm(params: dict[str, Tensor], x_r: np.ndarray) -> np.ndarray:
    mean = params[NORM_PREFIX + "mean"].data
    std = params[NORM_PREFIX + "std"].data
    return ((x_r - mean) / std).astype(np.float32)


def backbone_forward(params: dict[str, Tensor], pixels: np.ndarray
                     ) -> tuple[Tensor, Tensor]:
    """Shared-weight per-slice CNN chain.

    pixels: (n, 32, 32) or (B, n, 32, 32). Returns (embeddings of shape
    (B, n, D) or (n, D), pre-GAP maps of shape (B*n, 64, 8, 8)).
    """
    single = pixels.ndim == 3
    stack = pixels[None] if single else pixels
    batch, n, height, width = stack.shape
    if (height, width) != (32, 32):
        raise ShapeMismatch(f"expected 32x32 slices, got {height}x{width}")
    x = Tensor(stack.reshape(batch * n, 1, height, width).astype(np.float32))
    x = tn.relu(tn.conv2d(x, params["backbone.conv1.w"], params["backbone.conv1.b"]))
    x = tn.maxpool2(x)
    x = tn.relu(tn.conv2d(x, params["backbone.conv2.w"], params["backbone.conv2.b"]))
    x = tn.maxpool2(x)
    pregap = tn.relu(tn.conv2d(x, params["backbone.conv3.w"], params["backbone.conv3.b"]))
    pooled = tn.global_avg_pool(pregap)
    emb = tn.linear(pooled, params["backbone.fc.w"], params["backbone.fc.b"])
    d_bb = emb.data.shape[-1]
    tokens = tn.reshape(emb, (batch, n, d_bb))
    if single:
        tokens = tn.reshape(tokens, (n, d_bb))
    return tokens, pregap


def ingest_precomputed(payload: bytes, config: ModelConfig) -> np.ndarray:
    """Load a precomputed (n, D) slice-feature tensor from checkpoint bytes."""
    tensors, _ = read_checkpoint(payload)
    if "deep_features" not in tensors:
        raise ConfigMismatch("no tensor named deep_features in payload")
    feats = tensors["deep_features"]
    expected = (config.n, config.backbone_dim)
    if feats.shape != expected:
        raise ConfigMismatch(f"deep_features shape {feats.shape} != {expected}")
    if not np.all(np.isfinite(feats)):
        raise InvalidFeatureValue("deep_features contains non-finite entries")
    return feats


def project(params: dict[str, Tensor], x_r: Tensor, x_d: Tensor
            ) -> tuple[Tensor, Tensor]:
    """Both modalities to the common width, layer-normalized per token."""
    r_hat = tn.layer_norm(
        tn.linear(x_r, params["proj.r.w"], params["proj.r.b"]),
        params["proj.r.gain"], params["proj.r.bias"])
    d_hat = tn.layer_norm(
        tn.linear(x_d, params["proj.d.w"], params["proj.d.b"]),
        params["proj.d.gain"], params["proj.d.bias"])
    return r_hat, d_hat


@dataclass
class ForwardOut:
    logits: Tensor                      # (B, m) mean-pooled head scores
    probs: Tensor                       # (B, m)
    attention: np.ndarray | None        # (B, h, n+1)
    scores: list[Tensor] = field(default_factory=list)   # h of (B, m)
    fused: list[Tensor] = field(default_factory=list)    # h of (B, d_c)
    pregap: Tensor | None = None        # (B*n, 64, 8, 8)
    attention_tensors: list[Tensor] = field(default_factory=list)  # h of (B, n+1)


def forward(params: dict[str, Tensor], config: ModelConfig,
            x_r: np.ndarray, x_d: Tensor | np.ndarray,
            pregap: Tensor | None = None) -> ForwardOut:
    """Batched forward pass.

    x_r: (B, 7k) raw radiomics rows (z-scored internally);
    x_d: (B, n, D) slice embeddings, as Tensor to keep backbone gradients.
    """
    if isinstance(x_d, np.ndarray):
        x_d = Tensor(x_d.astype(np.float32))
    batch = x_d.data.shape[0]
    if x_r.shape != (batch, config.radiomics_width):
        raise ShapeMismatch(
            f"x_r shape {x_r.shape} != ({batch}, {config.radiomics_width})")
    if x_d.data.shape[1:] != (config.n, config.backbone_dim):
        raise ShapeMismatch(
            f"x_d shape {x_d.data.shape} != (B, {config.n}, {config.backbone_dim})")

    x_r_t = Tensor(apply_norm(params, x_r))
    r_hat, d_hat = project(params, x_r_t, x_d)
    tokens = tn.concat([tn.reshape(r_hat, (batch, 1, config.d_common)), d_hat], axis=1)

    if not config.use_attention:
        flat = tn.reshape(tokens, (batch, config.n_tokens * config.d_common))
        logits = tn.linear(flat, params["simple.score.w"], params["simple.score.b"])
        return ForwardOut(logits=logits, probs=tn.softmax(logits),
                          attention=None, pregap=pregap)

    t_tokens = config.n_tokens
    score_sum: Tensor | None = None
    scores: list[Tensor] = []
    fused_list: list[Tensor] = []
    attn_rows: list[np.ndarray] = []
    attn_tensors: list[Tensor] = []
    for j in range(config.h):
        if config.uniform_attention:
            weights = Tensor(np.full((batch, t_tokens), 1.0 / t_tokens,
                                     dtype=np.float32))
        else:
            hidden = tn.tanh_act(tn.linear(
                tokens, params[f"head{j}.attn1.w"], params[f"head{j}.attn1.b"]))
            raw = tn.linear(hidden, params[f"head{j}.attn2.w"],
                            params[f"head{j}.attn2.b"])
            weights = tn.softmax(tn.reshape(raw, (batch, t_tokens)))
        blended = tn.tsum(
            tn.mul(tn.reshape(weights, (batch, t_tokens, 1)), tokens), axis=1)
        s_j = tn.linear(blended, params[f"head{j}.score.w"], params[f"head{j}.score.b"])
        score_sum = s_j if score_sum is None else tn.add(score_sum, s_j)
        scores.append(s_j)
        fused_list.append(blended)
        attn_rows.append(weights.data)
        attn_tensors.append(weights)

    logits = tn.mul(score_sum, 1.0 / config.h)
    return ForwardOut(
        logits=logits, probs=tn.softmax(logits),
        attention=np.stack(attn_rows, axis=1),
        scores=scores, fused=fused_list, pregap=pregap,
        attention_tensors=attn_tensors)


def predict(params: dict[str, Tensor], config: ModelConfig,
            x_r: np.ndarray, x_d_or_pixels: np.ndarray) -> Prediction:
    """Single-sample inference from pixels (runs the backbone) or from a
    precomputed (n, D) embedding matrix."""
    if x_d_or_pixels.ndim == 3 and x_d_or_pixels.shape[1:] == (32, 32):
        tokens, pregap = backbone_forward(params, x_d_or_pixels)
        x_d = tn.reshape(tokens, (1, config.n, config.backbone_dim))
    elif x_d_or_pixels.shape == (config.n, config.backbone_dim):
        x_d = Tensor(x_d_or_pixels[None].astype(np.float32))
        pregap = None
    else:
        raise ShapeMismatch(f"unexpected slice input shape {x_d_or_pixels.shape}")
    out = forward(params, config, x_r[None], x_d, pregap=pregap)
    probs = out.probs.data[0]
    if config.use_attention:
        attention = out.attention[0]
        head_scores = np.stack([s.data[0] for s in out.scores])
        fused = np.stack([f.data[0] for f in out.fused])
    else:
        attention = None
        head_scores = None
        fused = None
    return Prediction(
        probabilities=probs, attention=attention, scores=head_scores,
        fused=fused, predicted=int(np.argmax(probs)))


def simpleff_predict(params: dict[str, Tensor], config: ModelConfig,
                     x_r: np.ndarray, x_d: np.ndarray) -> np.ndarray:
    """Concatenation-baseline probabilities for one sample."""
    if config.use_attention:
        raise ConfigError("config must have use_attention=False")
    out = forward(params, config, x_r[None], x_d[None])
    return out.probs.data[0]
