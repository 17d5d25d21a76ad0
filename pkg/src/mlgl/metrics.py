"""Classification and regression metrics.

Accuracy is micro (all instance-class decisions pooled, threshold 0.5),
F-score is macro over classes, AUC is macro over classes via the
rank-sum formulation with average ranks on ties.  Classes whose targets
are all one value cannot be ranked and are skipped from the macro AUC;
their names are reported, not silently dropped.  Percentages are 0-100.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def rankdata(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    # average the rank over each run of equal values
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a positive outranks a negative; nan when the
    labels are all one class."""
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class ClassificationReport:
    acc: float
    f_score: float
    auc: float
    f_score_micro: float
    auc_micro: float
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    auc_skipped: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"acc": self.acc, "f_score": self.f_score, "auc": self.auc,
                "f_score_micro": self.f_score_micro, "auc_micro": self.auc_micro,
                "per_class": self.per_class, "auc_skipped": self.auc_skipped}


def _f1(tp: float, fp: float, fn: float) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def classification_metrics(probs: np.ndarray, targets: np.ndarray,
                           names) -> ClassificationReport:
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape or probs.ndim != 2:
        raise ValueError(f"probs {probs.shape} and targets {targets.shape} must be "
                         "matching 2-D arrays")
    names = list(names)
    if len(names) != probs.shape[1]:
        raise ValueError(f"{len(names)} names for {probs.shape[1]} classes")
    decisions = probs >= 0.5
    acc = float((decisions == (targets == 1)).mean() * 100.0)

    per_class: dict[str, dict[str, float]] = {}
    f1s: list[float] = []
    aucs: list[float] = []
    skipped: list[str] = []
    tp_all = fp_all = fn_all = 0.0
    for k, name in enumerate(names):
        y = targets[:, k] == 1
        d = decisions[:, k]
        tp = float((d & y).sum())
        fp = float((d & ~y).sum())
        fn = float((~d & y).sum())
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        f1 = _f1(tp, fp, fn)
        f1s.append(f1)
        auc = roc_auc(probs[:, k], targets[:, k])
        entry = {"f1": f1 * 100.0,
                 "precision": tp / (tp + fp) * 100.0 if tp + fp > 0 else 0.0,
                 "recall": tp / (tp + fn) * 100.0 if tp + fn > 0 else 0.0,
                 "auc": auc}
        per_class[name] = entry
        if np.isnan(auc):
            skipped.append(name)
        else:
            aucs.append(auc)
    macro_auc = float(np.mean(aucs)) if aucs else float("nan")
    micro_auc = roc_auc(probs.reshape(-1), targets.reshape(-1))
    return ClassificationReport(
        acc=acc,
        f_score=float(np.mean(f1s) * 100.0),
        auc=macro_auc,
        f_score_micro=_f1(tp_all, fp_all, fn_all) * 100.0,
        auc_micro=float(micro_auc),
        per_class=per_class,
        auc_skipped=skipped)


def regression_metrics(pred: np.ndarray, target: np.ndarray) -> dict[str, float]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"pred {pred.shape} and target {target.shape} must be "
                         "matching 1-D arrays")
    err = pred - target
    ss_res = float((err ** 2).sum())
    ss_tot = float(((target - target.mean()) ** 2).sum())
    return {"mse": float((err ** 2).mean()),
            "mae": float(np.abs(err).mean()),
            "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")}
