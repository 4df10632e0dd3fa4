"""Command-line surface for the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fusion_model as fm
from . import pipeline
from .ablation import ablation_csv, run_ablation
from .config import Config, check_structural_match, parse_config
from .errors import MhaffError
from .explain import export_attention, grad_cam, to_pgm
from .metrics import bootstrap_ci, compute_metrics
from .phantom import write_dataset
from .screening import sis_select
from .train_eval import TrainSettings, curve_csv, evaluate, load_params, train
from .volume_io import (
    FeatureTable,
    read_checkpoint_file,
    write_checkpoint_file,
)

OVERRIDE_KEYS = ("m", "h", "n", "k", "d_common", "d_attn", "backbone_dim",
                 "lr", "weight_decay", "epochs", "batch_size", "bins",
                 "hu_min", "hu_max", "spacing", "seed")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    group = parser.add_argument_group("config overrides")
    for key in ("m", "h", "n", "k", "d_common", "d_attn", "backbone_dim",
                "epochs", "batch_size", "bins"):
        group.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int)
    for key in ("lr", "weight_decay", "hu_min", "hu_max", "spacing"):
        group.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)


def _effective_config(args, data_dir: str = "", work_dir: str = "") -> Config:
    text = ""
    if getattr(args, "config", None):
        text = Path(args.config).read_text(encoding="utf-8")
    overrides = {key: getattr(args, key, None) for key in OVERRIDE_KEYS}
    overrides["data_dir"] = data_dir or None
    overrides["work_dir"] = work_dir or None
    return parse_config(text, overrides)


def _model_config(config: Config, **kw) -> fm.ModelConfig:
    return fm.ModelConfig(m=config.m, h=config.h, n=config.n, k=config.k,
                          d_common=config.d_common, d_attn=config.d_attn,
                          backbone_dim=config.backbone_dim, seed=config.seed,
                          **kw)


def _echoed(text: str, config: Config) -> str:
    comments = "".join(f"# {line}\n" for line in config.to_text().strip().splitlines())
    return comments + text


def cmd_phantom_gen(args) -> int:
    config = _effective_config(args, work_dir=args.out)
    out = Path(args.out)
    annotations = write_dataset(args.count, args.seed, out)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
    print(f"wrote {len(annotations)} phantom volumes to {out}")
    return 0


def cmd_preprocess(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    rois, roi_masks = pipeline.preprocess_corpus(args.data, config)
    pipeline.write_roi_files(rois, roi_masks, args.work, config)
    print(f"wrote {len(rois)} ROI stacks to {Path(args.work) / pipeline.ROIS_FILE}")
    return 0


def cmd_radiomics_extract(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    table = pipeline.extract_features_corpus(args.data, config)
    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    table.write_csv(work / pipeline.FEATURES_FILE, config_text=config.to_text())
    print(f"wrote {len(table.rows)} feature rows "
          f"({len(table.feature_names)} columns) to {work / pipeline.FEATURES_FILE}")
    return 0


def cmd_screen(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    work = Path(args.work)
    annotations, splits = pipeline.load_corpus(args.data)
    table = FeatureTable.read_csv(work / pipeline.FEATURES_FILE)
    ids = pipeline.split_ids(annotations, splits)
    report, _ = sis_select(table, ids["train"], ids["val"],
                           k=config.k, n_classes=config.m)
    (work / pipeline.SCREEN_FILE).write_text(
        _echoed(report.to_csv(), config), encoding="utf-8")
    (work / pipeline.SELECTED_FILE).write_text(
        _echoed(report.selected_text(), config), encoding="utf-8")
    print(f"selected {len(report.selected)} features "
          f"-> {work / pipeline.SELECTED_FILE}")
    return 0


def cmd_train(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    config.seed = args.seed
    sets, _ = pipeline.build_sample_sets(args.data, args.work, config)
    model_cfg = _model_config(config)
    settings = TrainSettings(lr=config.lr, weight_decay=config.weight_decay,
                             epochs=config.epochs, batch_size=config.batch_size,
                             seed=config.seed)
    state, curve, best_epoch = train(sets["train"], sets["val"], model_cfg, settings)
    work = Path(args.work)
    write_checkpoint_file(state, config.to_text(), work / pipeline.CHECKPOINT_FILE)
    (work / pipeline.CURVE_FILE).write_text(
        _echoed(curve_csv(curve), config), encoding="utf-8")
    best = curve[best_epoch]
    print(f"best epoch {best_epoch}: val accuracy {best['val_accuracy']:.4f} "
          f"-> {work / pipeline.CHECKPOINT_FILE}")
    return 0


def _load_model(work: Path, config: Config):
    state, stored_text = read_checkpoint_file(work / pipeline.CHECKPOINT_FILE)
    check_structural_match(stored_text, config)
    model_cfg = _model_config(config)
    return load_params(state, model_cfg), model_cfg


def cmd_eval(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    work = Path(args.work)
    params, model_cfg = _load_model(work, config)
    sets, _ = pipeline.build_sample_sets(args.data, args.work, config)
    samples = sets[args.split]
    if len(samples) == 0:
        raise MhaffError(f"split {args.split} is empty")
    pred, probs = evaluate(params, model_cfg, samples, config.batch_size)
    scores = probs[:, 1] if config.m == 2 else None
    report = compute_metrics(pred, samples.labels, config.m, scores=scores)
    if config.m == 2 and scores is not None:
        report.auc_ci = bootstrap_ci(scores, samples.labels, seed=config.seed)
    report.config_text = config.to_text()
    out = work / f"metrics_{args.split}.json"
    out.write_text(report.to_json(), encoding="utf-8")
    line = f"{args.split}: accuracy {report.accuracy:.4f}"
    if report.auc is not None:
        line += f", auc {report.auc:.4f}"
    if report.kappa is not None:
        line += f", kappa {report.kappa:.4f}"
    print(line + f" -> {out}")
    return 0


def cmd_predict(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    work = Path(args.work)
    params, model_cfg = _load_model(work, config)
    sets, _ = pipeline.build_sample_sets(args.data, args.work, config)
    for samples in sets.values():
        if args.id in samples.ids:
            row = samples.ids.index(args.id)
            prediction = fm.predict(params, model_cfg,
                                    samples.x_r[row], samples.pixels[row])
            payload = {
                "nodule_id": args.id,
                "predicted": prediction.predicted,
                "probabilities": prediction.probabilities.tolist(),
                "attention": prediction.attention.tolist(),
            }
            print(json.dumps(payload, sort_keys=True))
            return 0
    raise MhaffError(f"nodule id {args.id} not found in {args.data}")


def cmd_explain(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    work = Path(args.work)
    params, model_cfg = _load_model(work, config)
    sets, _ = pipeline.build_sample_sets(args.data, args.work, config)
    samples = sets[args.split]
    if len(samples) == 0:
        raise MhaffError(f"split {args.split} is empty")
    out = Path(args.out) if args.out else work / "explain"
    out.mkdir(parents=True, exist_ok=True)

    summary = export_attention(params, model_cfg, samples, config.batch_size)
    (out / "attention_summary.csv").write_text(
        _echoed(summary.to_csv(), config), encoding="utf-8")
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")

    count = min(args.limit, len(samples)) if args.limit else len(samples)
    for row in range(count):
        target = int(samples.labels[row])
        maps = grad_cam(params, model_cfg, samples.x_r[row],
                        samples.pixels[row], target)
        for z in range(model_cfg.n):
            name = f"gradcam_{samples.ids[row]}_class{target}_slice{z}.pgm"
            (out / name).write_text(
                to_pgm(maps[z], comment=f"{samples.ids[row]} class {target} slice {z}"),
                encoding="ascii")
    print(f"wrote attention summary and {count} Grad-CAM stacks to {out}")
    return 0


def cmd_ablate(args) -> int:
    config = _effective_config(args, data_dir=args.data, work_dir=args.work)
    heads = tuple(int(tok) for tok in args.heads.split(","))
    sets, full_sets = pipeline.build_sample_sets(args.data, args.work, config,
                                                 include_full=True)
    rows = run_ablation(sets, full_sets, config, seed=args.seed, heads=heads,
                        epochs=args.epochs)
    work = Path(args.work)
    out = work / "ablation.csv"
    out.write_text(_echoed(ablation_csv(rows), config), encoding="utf-8")
    for row in rows:
        print(f"{row.name}: accuracy {row.report.accuracy:.4f}")
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mhaff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("phantom-gen", help="generate a synthetic corpus")
    p.add_argument("--count", type=int, required=True, help="volumes per class")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("preprocess", help="resample, normalize, cut ROI stacks")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("radiomics-extract", help="compute the feature table")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_radiomics_extract)

    p = sub.add_parser("screen", help="rank features, keep top-k per family")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("train", help="train the fusion model")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="probabilities for one nodule")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--id", required=True, help="nodule id")
    _add_config_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="attention summary and Grad-CAM maps")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", help="output directory (default <work>/explain)")
    p.add_argument("--limit", type=int, default=8,
                   help="Grad-CAM sample cap; 0 = all")
    _add_config_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", help="head sweep and baseline rows")
    p.add_argument("--data", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--heads", default="1,2,4,8")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return int(code)
    try:
        return args.func(args)
    except MhaffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
