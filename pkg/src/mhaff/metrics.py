"""Classification metrics: confusion-matrix rates, Cohen's kappa,
rank AUC, and the percentile bootstrap interval."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SingleClassLabels
from .screening import auc_rank

BOOTSTRAP_DEFAULT = 2000
REDRAW_CAP = 10


@dataclass
class MetricsReport:
    task: str                       # "binary" or "threeclass"
    n_samples: int
    accuracy: float
    confusion: np.ndarray           # (m, m); rows true, cols predicted
    auc: float | None = None
    auc_ci: tuple[float, float] | None = None
    sensitivity: float | None = None
    specificity: float | None = None
    f1: float | None = None
    kappa: float | None = None
    curve: list[dict] | None = None
    config_text: str | None = None

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "n_samples": self.n_samples,
            "accuracy": self.accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "auc": self.auc,
            "auc_ci": list(self.auc_ci) if self.auc_ci is not None else None,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f1": self.f1,
            "kappa": self.kappa,
            "curve": self.curve,
            "config": self.config_text,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(true * m + pred, minlength=m * m)
    return counts.reshape(m, m)


def cohen_kappa(confusion: np.ndarray) -> float:
    c = confusion.astype(np.float64)
    n = c.sum()
    p_o = np.trace(c) / n
    p_e = float((c.sum(axis=1) * c.sum(axis=0)).sum()) / (n * n)
    if p_e >= 1.0 - 1e-15:
        return 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def binary_rates(confusion: np.ndarray) -> dict[str, float | None]:
    """Sen/Spe/F1 with class 1 as positive; undefined rates become None."""
    tn, fp = float(confusion[0, 0]), float(confusion[0, 1])
    fn, tp = float(confusion[1, 0]), float(confusion[1, 1])
    sen = tp / (tp + fn) if tp + fn > 0 else None
    spe = tn / (tn + fp) if tn + fp > 0 else None
    precision = tp / (tp + fp) if tp + fp > 0 else None
    if precision is None or sen is None or precision + sen == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * sen / (precision + sen)
    return {"sensitivity": sen, "specificity": spe, "f1": f1}


def bootstrap_ci(scores: np.ndarray, labels: np.ndarray,
                 n_boot: int = BOOTSTRAP_DEFAULT, seed: int = 0
                 ) -> tuple[float, float]:
    """Percentile bootstrap 95% interval for the rank AUC.

    Single-class resamples are redrawn up to 10 times, then skipped.
    """
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.min() == y.max():
        raise SingleClassLabels("bootstrap needs both classes")
    rng = np.random.default_rng(seed)
    n = y.size
    aucs = []
    for _ in range(n_boot):
        for _ in range(REDRAW_CAP):
            idx = rng.integers(0, n, size=n)
            if y[idx].min() != y[idx].max():
                aucs.append(auc_rank(s[idx], y[idx]))
                break
    lo, hi = np.percentile(np.array(aucs), [2.5, 97.5])
    return float(lo), float(hi)


def compute_metrics(predictions: np.ndarray, labels: np.ndarray, m: int,
                    scores: np.ndarray | None = None,
                    ci_seed: int | None = None,
                    n_boot: int = BOOTSTRAP_DEFAULT) -> MetricsReport:
    """Full report for one prediction set.

    Binary reports Acc/AUC/Sen/Spe/F1 (scores = class-1 probability);
    the 3-class report keeps Acc and Cohen's kappa.
    """
    confusion = confusion_matrix(predictions, labels, m)
    n = int(confusion.sum())
    accuracy = float(np.trace(confusion) / n)
    if m == 2:
        rates = binary_rates(confusion)
        auc = None
        ci = None
        if scores is not None:
            auc = auc_rank(scores, (np.asarray(labels) == 1).astype(np.int64))
            if ci_seed is not None:
                ci = bootstrap_ci(scores, labels, n_boot=n_boot, seed=ci_seed)
        return MetricsReport(
            task="binary", n_samples=n, accuracy=accuracy, confusion=confusion,
            auc=auc, auc_ci=ci, **rates)
    return MetricsReport(
        task="threeclass", n_samples=n, accuracy=accuracy, confusion=confusion,
        kappa=cohen_kappa(confusion))
