"""Losses, batching and the training loop.

Nine loss terms, one per level and output role: binary cross entropy
(with probability clamping) for the two event sets, squared error for
the rating.  The total is the weighted sum; terms with zero weight are
skipped outright so their parameters receive exactly zero gradient.
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from . import tensor as T
from .checkpoint import (load_checkpoint, restore_model, restore_optimizer,
                         save_checkpoint)
from .data import Dataset, Taxonomy
from .errors import CheckpointError, TrainingError
from .graph import MlglModel
from .metrics import classification_metrics, regression_metrics
from .tensor import Tensor

LOSS_NAMES = ("l1_fae", "l1_cae", "l1_ar",
              "l2_fae", "l2_cae", "l2_ar",
              "l3_fae", "l3_cae", "l3_ar")
PROB_EPS = 1e-7


def jsonable(obj):
    """Recursive copy with non-finite floats turned into None, so every
    emitted report is strict JSON."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def bce_loss(p: Tensor, y: np.ndarray) -> Tensor:
    target = Tensor(np.asarray(y, dtype=p.dtype))
    pc = T.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    pos = T.mul(target, T.log(pc))
    neg = T.mul(1.0 - target, T.log(1.0 - pc))
    return T.neg(T.tmean(T.add(pos, neg)))


def squared_loss(pred: Tensor, y: np.ndarray) -> Tensor:
    diff = T.sub(pred, Tensor(np.asarray(y, dtype=pred.dtype)))
    return T.tmean(T.mul(diff, diff))


def compute_losses(out: dict[str, Tensor], y_fae: np.ndarray, y_cae: np.ndarray,
                   y_ar: np.ndarray, weights) -> tuple[Tensor, dict[str, float]]:
    weights = list(weights)
    if len(weights) != len(LOSS_NAMES):
        raise TrainingError(f"expected {len(LOSS_NAMES)} loss weights, got {len(weights)}")
    targets = {"fae": y_fae, "cae": y_cae, "ar": y_ar}
    total: Tensor | None = None
    parts: dict[str, float] = {}
    for name, w in zip(LOSS_NAMES, weights):
        pred = out[name]
        if not np.isfinite(pred.data).all():
            raise TrainingError(f"non-finite values in model output {name}")
        role = name.split("_")[1]
        term = squared_loss(pred, targets[role]) if role == "ar" \
            else bce_loss(pred, targets[role])
        parts[name] = term.item()
        if w != 0.0:
            weighted = T.mul(term, float(w))
            total = weighted if total is None else T.add(total, weighted)
    if total is None:
        raise TrainingError("all loss weights are zero; nothing to optimize")
    parts["total"] = total.item()
    return total, parts


def make_snapshot(cfg, taxonomy: Taxonomy) -> dict:
    """Config dict stored in every checkpoint; enough to rebuild the model
    and name its outputs without any external file."""
    return {"run": cfg.to_dict(),
            "taxonomy": {"fae_names": list(taxonomy.fae_names),
                         "cae_names": list(taxonomy.cae_names),
                         "fae_to_cae": list(taxonomy.fae_to_cae)}}


def snapshot_taxonomy(snapshot: dict) -> Taxonomy:
    try:
        tax = snapshot["taxonomy"]
        return Taxonomy(tuple(tax["fae_names"]), tuple(tax["cae_names"]),
                        tuple(tax["fae_to_cae"]))
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint config lacks a taxonomy block: {e}") from None


def model_from_snapshot(snapshot: dict):
    """Rebuild (model, run_config, taxonomy) from a checkpoint's config."""
    from .config import RunConfig

    if "run" not in snapshot:
        raise CheckpointError("checkpoint config lacks a run block")
    cfg = RunConfig.from_dict(snapshot["run"])
    tax = snapshot_taxonomy(snapshot)
    mc = cfg.model
    model = MlglModel(tax.n_fae, tax.n_cae,
                      rng_mod.stream(cfg.seed, rng_mod.TAG_INIT),
                      np.dtype(cfg.training.dtype),
                      channels=mc.channels, embed_dim=mc.embed_dim,
                      gcn_layers=mc.gcn_layers, dropout_p=mc.dropout,
                      fusion_mode=mc.fusion,
                      attention_projections=mc.attention_projections,
                      gating_shared_bias=mc.gating_shared_bias)
    return model, cfg, tax


def stack_features(arrays, dtype, pad_value: float) -> np.ndarray:
    """Stack (n_mels, T_i) arrays into (B, 1, n_mels, T_max), padding the
    tail of shorter clips with the log-floor (silence) value."""
    n_mels = arrays[0].shape[0]
    t_max = max(a.shape[1] for a in arrays)
    out = np.full((len(arrays), 1, n_mels, t_max), pad_value, dtype=dtype)
    for i, a in enumerate(arrays):
        if a.shape[0] != n_mels:
            raise TrainingError(f"feature row count mismatch: {a.shape[0]} vs {n_mels}")
        out[i, 0, :, :a.shape[1]] = a
    return out


def make_batch(ds: Dataset, indices, dtype, pad_value: float):
    recs = [ds.records[i] for i in indices]
    x = stack_features([ds.features[r.clip_id] for r in recs], dtype, pad_value)
    y_fae = np.stack([r.y_fae for r in recs]).astype(dtype)
    y_cae = ds.taxonomy.derive_cae(y_fae)
    y_ar = np.array([r.ar for r in recs], dtype=dtype)
    return x, y_fae, y_cae, y_ar


def evaluate_model(model, ds: Dataset, batch_size: int, dtype, pad_value: float):
    """Eval-mode predictions for every record, in dataset order."""
    preds: dict[str, list[np.ndarray]] = {k: [] for k in LOSS_NAMES}
    model.eval()
    with T.no_grad():
        for start in range(0, len(ds), batch_size):
            idx = range(start, min(start + batch_size, len(ds)))
            x, _, _, _ = make_batch(ds, idx, dtype, pad_value)
            out = model(Tensor(x))
            for k in LOSS_NAMES:
                preds[k].append(out[k].data)
    stacked = {k: np.concatenate(v) for k, v in preds.items()}
    y_fae = np.stack([r.y_fae for r in ds.records])
    y_cae = ds.taxonomy.derive_cae(y_fae)
    y_ar = np.array([r.ar for r in ds.records])
    return stacked, {"fae": y_fae, "cae": y_cae, "ar": y_ar}


def metrics_report(preds: dict[str, np.ndarray], targets: dict[str, np.ndarray],
                   taxonomy) -> dict:
    report: dict = {}
    for level in (1, 2, 3):
        fae = classification_metrics(preds[f"l{level}_fae"], targets["fae"],
                                     taxonomy.fae_names)
        cae = classification_metrics(preds[f"l{level}_cae"], targets["cae"],
                                     taxonomy.cae_names)
        arp = regression_metrics(preds[f"l{level}_ar"], targets["ar"])
        report[f"l{level}"] = {"fae": fae.as_dict(), "cae": cae.as_dict(), "arp": arp}
    return report


class Trainer:
    """Runs epochs with per-epoch Philox streams for shuffling and dropout,
    logs JSON lines, and keeps best/last checkpoints when out_dir is set.
    The best checkpoint minimizes final-level rating MSE on the validation
    split, ties broken by higher final-level fine-event AUC."""

    def __init__(self, model, optimizer, taxonomy, cfg, out_dir=None):
        self.model = model
        self.opt = optimizer
        self.taxonomy = taxonomy
        self.cfg = cfg
        self.snapshot = make_snapshot(cfg, taxonomy)
        self.seed = cfg.seed
        self.dtype = np.dtype(cfg.training.dtype)
        self.pad_value = float(math.log(cfg.features.log_floor))
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.epoch = 0
        self.best_key: tuple[float, float] | None = None
        self._log_fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._log_fh = open(self.out_dir / "train_log.jsonl", "a", encoding="utf-8")

    def close(self):
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def log(self, obj: dict):
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(jsonable(obj), sort_keys=True) + "\n")
            self._log_fh.flush()

    def resume(self, path):
        ckpt = load_checkpoint(path)
        restore_model(self.model, ckpt.tensors)
        restore_optimizer(self.opt, ckpt.tensors)
        self.epoch = ckpt.epoch
        self.log({"kind": "resume", "epoch": self.epoch, "from": str(path)})

    def run_epoch(self, train_ds: Dataset) -> float:
        self.model.train()
        order = rng_mod.stream(self.seed, rng_mod.TAG_SHUFFLE, self.epoch).permutation(len(train_ds))
        drop_rng = rng_mod.stream(self.seed, rng_mod.TAG_DROPOUT, self.epoch)
        bs = self.cfg.training.batch_size
        total = 0.0
        n_batches = 0
        started = time.perf_counter()
        for step, start in enumerate(range(0, len(order), bs)):
            idx = order[start:start + bs]
            x, y_fae, y_cae, y_ar = make_batch(train_ds, idx, self.dtype, self.pad_value)
            out = self.model(Tensor(x), drop_rng)
            loss, parts = compute_losses(out, y_fae, y_cae, y_ar,
                                         self.cfg.training.loss_weights)
            if not np.isfinite(parts["total"]):
                raise TrainingError(f"loss diverged at epoch {self.epoch} step {step}")
            self.opt.zero_grad()
            loss.backward()
            self.opt.step()
            total += parts["total"]
            n_batches += 1
            self.log({"kind": "step", "epoch": self.epoch, "step": step,
                      "losses": parts,
                      "elapsed_s": round(time.perf_counter() - started, 3)})
        return total / max(n_batches, 1)

    def validate(self, val_ds: Dataset) -> dict:
        preds, targets = evaluate_model(self.model, val_ds, self.cfg.training.batch_size,
                                        self.dtype, self.pad_value)
        return metrics_report(preds, targets, self.taxonomy)

    def _rng_blob(self) -> dict:
        return {"seed": self.seed, "epoch": self.epoch,
                "shuffle": rng_mod.state_blob(
                    rng_mod.stream(self.seed, rng_mod.TAG_SHUFFLE, self.epoch))}

    def save(self, name: str):
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        save_checkpoint(path, self.model, self.snapshot, self.epoch,
                        self._rng_blob(), self.opt)
        return path

    def fit(self, train_ds: Dataset, val_ds: Dataset | None = None,
            epochs: int | None = None) -> dict:
        epochs = self.cfg.training.epochs if epochs is None else epochs
        history: dict = {"train_loss": [], "val": []}
        while self.epoch < epochs:
            mean_loss = self.run_epoch(train_ds)
            history["train_loss"].append(mean_loss)
            self.log({"kind": "epoch", "epoch": self.epoch, "train_loss": mean_loss})
            self.epoch += 1
            if val_ds is not None and len(val_ds) > 0 \
                    and self.epoch % self.cfg.training.val_interval == 0:
                report = self.validate(val_ds)
                history["val"].append({"epoch": self.epoch, "report": report})
                self.log({"kind": "val", "epoch": self.epoch, "report": report})
                mse = report["l3"]["arp"]["mse"]
                auc = report["l3"]["fae"]["auc"]
                key = (mse, -(auc if np.isfinite(auc) else -1.0))
                if self.best_key is None or key < self.best_key:
                    self.best_key = key
                    self.save("best.ckpt")
            self.save("last.ckpt")
        return history
