"""Configuration sweeps: head counts, screening on/off, attention
variants, and the two simple baselines, each as one report row."""

from __future__ import annotations

from dataclasses import dataclass, replace
from hashlib import blake2s

import numpy as np

from . import fusion_model as fm
from . import tensor_nn as tn
from .config import Config
from .metrics import MetricsReport, compute_metrics
from .tensor_nn import OptimizerState, Tensor, adam_step, backward, cosine_lr
from .train_eval import SampleSet, TrainSettings, evaluate, load_params, train

HEAD_SWEEP = (1, 2, 4, 8)


@dataclass
class AblationRow:
    name: str
    h: int | None
    sis: bool
    attention: str          # "multi", "uniform", "concat", "none"
    report: MetricsReport
    uniform_check: float | None = None   # max |weight - 1/(n+1)| when uniform


def row_seed(global_seed: int, name: str) -> int:
    digest = blake2s(f"{global_seed}:{name}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def _model_config(config: Config, **kw) -> fm.ModelConfig:
    base = fm.ModelConfig(m=config.m, h=config.h, n=config.n, k=config.k,
                          d_common=config.d_common, d_attn=config.d_attn,
                          backbone_dim=config.backbone_dim, seed=config.seed)
    return replace(base, **kw) if kw else base


def _run_row(name: str, sets: dict[str, SampleSet], model_cfg: fm.ModelConfig,
             config: Config, seed: int, epochs: int) -> tuple[MetricsReport, dict]:
    settings = TrainSettings(lr=config.lr, weight_decay=config.weight_decay,
                             epochs=epochs, batch_size=config.batch_size,
                             seed=seed)
    state, _, _ = train(sets["train"], sets["val"], model_cfg, settings)
    params = load_params(state, model_cfg)
    pred, probs = evaluate(params, model_cfg, sets["test"], config.batch_size)
    scores = probs[:, 1] if config.m == 2 else None
    report = compute_metrics(pred, sets["test"].labels, config.m, scores=scores)
    return report, {"params": params, "config": model_cfg}


def _attention_spread(params, model_cfg, samples: SampleSet) -> float:
    """Largest deviation of any exported weight from 1/(n+1)."""
    uniform = 1.0 / model_cfg.n_tokens
    worst = 0.0
    tokens, _ = fm.backbone_forward(params, samples.pixels[:8])
    out = fm.forward(params, model_cfg, samples.x_r[:8], tokens)
    worst = float(np.abs(out.attention - uniform).max())
    return worst


def radiomics_only_baseline(sets: dict[str, SampleSet], m: int,
                            settings: TrainSettings) -> MetricsReport:
    """Softmax regression on the screened radiomics columns alone."""
    x_tr = sets["train"].x_r.astype(np.float64)
    mean = x_tr.mean(axis=0)
    std = x_tr.std(axis=0)
    std = np.where(std <= 1e-12, 1.0, std)

    def prep(s: SampleSet) -> np.ndarray:
        return ((s.x_r - mean) / std).astype(np.float32)

    z_tr, z_val, z_te = prep(sets["train"]), prep(sets["val"]), prep(sets["test"])
    y_tr = sets["train"].labels
    width = z_tr.shape[1]
    rng = np.random.default_rng(settings.seed)
    limit = np.sqrt(6.0 / (width + m))
    w = Tensor(rng.uniform(-limit, limit, (width, m)).astype(np.float32),
               requires_grad=True)
    b = Tensor(np.zeros(m, dtype=np.float32), requires_grad=True)
    params = {"w": w, "b": b}
    state = OptimizerState(lr=settings.lr, weight_decay=settings.weight_decay)
    shuffle = np.random.default_rng(settings.seed)

    best = (-1.0, None, None)
    for epoch in range(settings.epochs):
        state.lr = cosine_lr(epoch, settings.epochs, settings.lr)
        order = shuffle.permutation(len(y_tr))
        for start in range(0, len(order), settings.batch_size):
            rows = order[start:start + settings.batch_size]
            logits = tn.linear(Tensor(z_tr[rows]), w, b)
            loss = tn.cross_entropy(logits, y_tr[rows])
            backward(loss)
            adam_step(params, state)
            w.grad = None
            b.grad = None
        val_pred = (z_val @ w.data + b.data).argmax(axis=1)
        val_acc = float((val_pred == sets["val"].labels).mean())
        if val_acc > best[0]:
            best = (val_acc, w.data.copy(), b.data.copy())

    _, w_best, b_best = best
    test_scores = z_te @ w_best + b_best
    pred = test_scores.argmax(axis=1)
    exp = np.exp(test_scores - test_scores.max(axis=1, keepdims=True))
    probs = exp / exp.sum(axis=1, keepdims=True)
    scores = probs[:, 1] if m == 2 else None
    return compute_metrics(pred, sets["test"].labels, m, scores=scores)


def run_ablation(sets: dict[str, SampleSet],
                 full_sets: dict[str, SampleSet] | None,
                 config: Config, seed: int,
                 heads: tuple[int, ...] = HEAD_SWEEP,
                 epochs: int | None = None) -> list[AblationRow]:
    """The sweep: h values, screening off, uniform attention,
    concatenation baseline, radiomics-only baseline.

    `full_sets` carries every usable radiomics column (screening off);
    pass None to skip that row.
    """
    epochs = epochs if epochs is not None else config.epochs
    rows: list[AblationRow] = []

    for h in heads:
        name = f"mhaff_x{h}"
        report, _ = _run_row(name, sets, _model_config(config, h=h),
                             config, row_seed(seed, name), epochs)
        rows.append(AblationRow(name=name, h=h, sis=True, attention="multi",
                                report=report))

    if full_sets is not None:
        name = "sis_off"
        width = full_sets["train"].x_r.shape[1]
        cfg = _model_config(config, radiomics_width_override=width)
        report, _ = _run_row(name, full_sets, cfg, config,
                             row_seed(seed, name), epochs)
        rows.append(AblationRow(name=name, h=config.h, sis=False,
                                attention="multi", report=report))

    name = "attention_off"
    cfg = _model_config(config, uniform_attention=True)
    report, ctx = _run_row(name, sets, cfg, config, row_seed(seed, name), epochs)
    spread = _attention_spread(ctx["params"], cfg, sets["test"])
    rows.append(AblationRow(name=name, h=config.h, sis=True,
                            attention="uniform", report=report,
                            uniform_check=spread))

    name = "simpleff"
    cfg = _model_config(config, use_attention=False)
    report, _ = _run_row(name, sets, cfg, config, row_seed(seed, name), epochs)
    rows.append(AblationRow(name=name, h=None, sis=True, attention="concat",
                            report=report))

    name = "radiomics_only"
    settings = TrainSettings(lr=config.lr, weight_decay=config.weight_decay,
                             epochs=epochs, batch_size=config.batch_size,
                             seed=row_seed(seed, name))
    rows.append(AblationRow(name=name, h=None, sis=True, attention="none",
                            report=radiomics_only_baseline(sets, config.m, settings)))
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    def cell(v) -> str:
        return "NA" if v is None else repr(v)

    lines = ["row,h,sis,attention,accuracy,auc,sensitivity,specificity,f1,kappa"]
    for r in rows:
        rep = r.report
        lines.append(",".join([
            r.name, "NA" if r.h is None else str(r.h),
            "1" if r.sis else "0", r.attention,
            repr(rep.accuracy), cell(rep.auc), cell(rep.sensitivity),
            cell(rep.specificity), cell(rep.f1), cell(rep.kappa)]))
    return "\n".join(lines) + "\n"
