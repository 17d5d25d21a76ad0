"""Command line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
problems.  Failures print a one-line JSON object on stderr with the
error class and message.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rng_mod
from .checkpoint import load_checkpoint, restore_model
from .config import RunConfig, load_config
from .data import (load_dataset, load_split, load_taxonomy, make_split,
                   synth_dataset, write_synth_dataset)
from .errors import ConfigError, DataError, MlglError
from .features import features_from_wav
from .graph import FUSION_MODES, MlglModel
from .kernels import backend_name
from .optim import AdamW
from .reports import run_analysis
from .tensor import Tensor, no_grad
from .training import (Trainer, evaluate_model, jsonable, metrics_report,
                       model_from_snapshot, stack_features)


def _cfg_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "fusion", None):
        cfg.model.fusion = args.fusion
    return cfg


def _build_model(cfg: RunConfig, tax) -> MlglModel:
    mc = cfg.model
    return MlglModel(tax.n_fae, tax.n_cae,
                     rng_mod.stream(cfg.seed, rng_mod.TAG_INIT),
                     np.dtype(cfg.training.dtype),
                     channels=mc.channels, embed_dim=mc.embed_dim,
                     gcn_layers=mc.gcn_layers, dropout_p=mc.dropout,
                     fusion_mode=mc.fusion,
                     attention_projections=mc.attention_projections,
                     gating_shared_bias=mc.gating_shared_bias)


def _load_corpus(cfg: RunConfig, tax=None):
    if not cfg.paths.labels_csv or not cfg.paths.audio_dir:
        raise ConfigError("paths.labels_csv and paths.audio_dir must be set")
    if tax is None:
        tax = load_taxonomy(cfg.paths.taxonomy)
    ds = load_dataset(cfg.paths.labels_csv, cfg.paths.audio_dir, tax, cfg.features)
    if cfg.paths.split_file:
        split = load_split(cfg.paths.split_file)
    else:
        split = make_split([r.clip_id for r in ds.records], cfg.seed)
    return tax, ds, split


def _split_part(ds, split, name: str):
    if name == "all":
        return ds
    part = ds.subset([cid for cid, p in split.items() if p == name])
    if len(part) == 0:
        raise DataError(f"split {name!r} selects no clips")
    return part


def cmd_train(args) -> int:
    cfg = _cfg_from_args(args)
    if args.out:
        cfg.paths.out_dir = args.out
    tax, ds, split = _load_corpus(cfg)
    train_ds = _split_part(ds, split, "train")
    try:
        val_ds = _split_part(ds, split, "val")
    except DataError:
        val_ds = None
    model = _build_model(cfg, tax)
    tc = cfg.training
    opt = AdamW(model.parameters(), lr=tc.lr, betas=(tc.beta1, tc.beta2),
                eps=tc.eps, weight_decay=tc.weight_decay)
    trainer = Trainer(model, opt, tax, cfg, out_dir=cfg.paths.out_dir)
    if args.resume:
        trainer.resume(args.resume)
    try:
        history = trainer.fit(train_ds, val_ds, epochs=args.epochs)
    finally:
        trainer.close()
    summary = {"out_dir": str(cfg.paths.out_dir), "backend": backend_name,
               "epochs_run": trainer.epoch,
               "train_clips": len(train_ds),
               "val_clips": len(val_ds) if val_ds is not None else 0,
               "final_train_loss": history["train_loss"][-1] if history["train_loss"] else None}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _restore_for_inference(checkpoint_path, config_path=None):
    ckpt = load_checkpoint(checkpoint_path)
    model, cfg, tax = model_from_snapshot(ckpt.config)
    restore_model(model, ckpt.tensors)
    model.eval()
    if config_path:
        file_cfg = load_config(config_path)
        cfg.paths = file_cfg.paths
        cfg.analysis = file_cfg.analysis
    return model, cfg, tax


def cmd_evaluate(args) -> int:
    model, cfg, tax = _restore_for_inference(args.checkpoint, args.config)
    _, ds, split = _load_corpus(cfg, tax)
    part = _split_part(ds, split, args.split)
    pad = float(math.log(cfg.features.log_floor))
    preds, targets = evaluate_model(model, part, cfg.training.batch_size,
                                    np.dtype(cfg.training.dtype), pad)
    report = metrics_report(preds, targets, tax)
    if args.level != "all":
        report = {f"l{args.level}": report[f"l{args.level}"]}
    blob = json.dumps(jsonable({"split": args.split, "clips": len(part),
                                "metrics": report}),
                      sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(blob + "\n", encoding="utf-8")
    print(blob)
    return 0


def predict_clip(checkpoint_path, wav_path, level: int = 3) -> dict:
    """Load a checkpoint, extract features for one clip and run the model;
    latency_s covers that whole pipeline."""
    t0 = time.perf_counter()
    ckpt = load_checkpoint(checkpoint_path)
    model, cfg, tax = model_from_snapshot(ckpt.config)
    restore_model(model, ckpt.tensors)
    model.eval()
    feats = features_from_wav(wav_path, cfg.features)
    x = stack_features([feats], np.dtype(cfg.training.dtype),
                       float(math.log(cfg.features.log_floor)))
    with no_grad():
        out = model(Tensor(x))
    latency = time.perf_counter() - t0
    key = f"l{level}"
    fae = {name: round(float(p), 6)
           for name, p in zip(tax.fae_names, out[f"{key}_fae"].data[0])}
    cae = {name: round(float(p), 6)
           for name, p in zip(tax.cae_names, out[f"{key}_cae"].data[0])}
    return {"clip": str(wav_path), "level": level,
            "latency_s": round(latency, 4),
            "events": sorted(n for n, p in fae.items() if p >= 0.5),
            "fae": fae, "cae": cae,
            "annoyance": round(float(out[f"{key}_ar"].data[0]), 4)}


def cmd_predict(args) -> int:
    result = predict_clip(args.checkpoint, args.wav, args.level)
    blob = json.dumps(jsonable(result), sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(blob + "\n", encoding="utf-8")
    print(blob)
    return 0


def cmd_analyze(args) -> int:
    model, cfg, tax = _restore_for_inference(args.checkpoint, args.config)
    if args.source:
        cfg.analysis.source = args.source
    _, ds, split = _load_corpus(cfg, tax)
    part = _split_part(ds, split, args.split)
    summary = run_analysis(model, part, cfg, args.out)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_features(args) -> int:
    cfg = _cfg_from_args(args)
    feats = features_from_wav(args.wav, cfg.features)
    lines = ["frame," + ",".join(f"mel_{i}" for i in range(feats.shape[0]))]
    for t in range(feats.shape[1]):
        lines.append(str(t) + "," + ",".join(f"{v:.8g}" for v in feats[:, t]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(json.dumps({"out": args.out, "n_mels": feats.shape[0],
                          "frames": feats.shape[1]}, sort_keys=True))
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth_data(args) -> int:
    tax = load_taxonomy(args.taxonomy)
    clips = synth_dataset(seed=args.seed, n=args.n, sample_rate=args.sr,
                          duration=args.duration, taxonomy=tax)
    write_synth_dataset(args.out, clips, args.sr, tax, split_seed=args.seed)
    print(json.dumps({"out": str(args.out), "clips": len(clips),
                      "sample_rate": args.sr, "duration_s": args.duration,
                      "seed": args.seed}, sort_keys=True))
    return 0


def cmd_param_count(args) -> int:
    cfg = _cfg_from_args(args)
    tax = load_taxonomy(cfg.paths.taxonomy)
    model = _build_model(cfg, tax)
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        key = ("backbones" if top.startswith("backbone") else
               "embeddings" if top.startswith("embed") else
               "graphs" if top.startswith("gcn") else
               "fusion" if top.startswith("fuse") else
               "heads")
        groups[key] = groups.get(key, 0) + p.data.size
    total = model.num_parameters()
    itemsize = np.dtype(cfg.training.dtype).itemsize
    buffer_bytes = sum(b.size * b.dtype.itemsize for _, b in model.named_buffers())
    print(json.dumps({"total": total, "groups": dict(sorted(groups.items())),
                      "fusion_mode": cfg.model.fusion,
                      "weight_bytes": total * itemsize + buffer_bytes},
                     sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlgl",
        description="Multi-level graph model for audio event tagging and "
                    "annoyance prediction")
    parser.add_argument("--version", action="version", version=f"mlgl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--fusion", choices=FUSION_MODES, help="override fusion mode")
    p.add_argument("--epochs", type=int, help="override config epoch count")
    p.add_argument("--out", help="override paths.out_dir")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics for a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="config supplying dataset paths")
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--level", default="all", choices=("1", "2", "3", "all"))
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predictions for a single wav file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--level", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--out", help="write the JSON result here as well")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("analyze", help="node correlation and event-rating reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="config supplying dataset paths")
    p.add_argument("--split", default="all", choices=("train", "val", "test", "all"))
    p.add_argument("--source", choices=("heads", "pca"),
                   help="override analysis.source")
    p.add_argument("--out", required=True, help="directory for report files")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("features", help="log-mel features for one wav as CSV")
    p.add_argument("--wav", required=True)
    p.add_argument("--config", help="config supplying feature parameters")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--sr", type=int, default=8000)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--taxonomy", help="taxonomy file (default: built-in)")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("param-count", help="parameter breakdown for a config")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--fusion", choices=FUSION_MODES)
    p.set_defaults(func=cmd_param_count)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 2
    except MlglError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
