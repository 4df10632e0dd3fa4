"""Marginal feature screening: univariate logistic fits ranked by
out-of-sample AUC, with top-k retention inside each feature family.

Features are screened one at a time: fit a two-parameter logistic model
on the training split, score the validation split, and rank by the
Mann-Whitney AUC of those scores. Each of the 7 families keeps its k
best features, so the reduced radiomics vector has width 7k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import CategoryStarved, SingleClassLabels
from .radiomics.extract import FAMILY_ORDER
from .volume_io import SENTINEL, FeatureTable

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-8


def feature_category(name: str) -> str:
    """Family token of a `{region}_{family}_{feature}` column name."""
    return name.split("_")[1]


def fit_univariate_logistic(values: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Newton-Raphson fit of P(y=1|x) = sigmoid(b0 + b1*x).

    The feature is z-scored internally; on non-convergence (perfect
    separation) the last iterate is kept, which leaves score order and
    hence AUC intact.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.min() == y.max():
        raise SingleClassLabels("labels contain a single class")
    x = np.asarray(values, dtype=np.float64)

    mu = x.mean()
    sd = x.std()
    base = float(y.mean())
    if sd <= 1e-12:
        return float(np.log(base / (1.0 - base))), 0.0
    z = (x - mu) / sd

    theta = np.zeros(2)
    design = np.column_stack([np.ones_like(z), z])
    for _ in range(NEWTON_MAX_ITER):
        p = expit(design @ theta)
        grad = design.T @ (y - p)
        if np.linalg.norm(grad) < NEWTON_TOL:
            break
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        theta = theta + step
    # report coefficients on the original feature scale
    b1 = theta[1] / sd
    b0 = theta[0] - theta[1] * mu / sd
    return float(b0), float(b1)


def auc_rank(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: (wins + 0.5*ties) / (n_pos * n_neg)."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassLabels("AUC needs both classes")
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0)
    ties = np.count_nonzero(diff == 0)
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def feature_auc(train_x: np.ndarray, train_y: np.ndarray,
                val_x: np.ndarray, val_y: np.ndarray, n_classes: int) -> float:
    """Out-of-sample AUC of one feature: fit train, score validation.

    Multiclass uses the macro average of one-vs-rest AUCs.
    """
    if n_classes == 2:
        b0, b1 = fit_univariate_logistic(train_x, (train_y == 1).astype(np.int64))
        return auc_rank(b0 + b1 * val_x, (val_y == 1).astype(np.int64))
    aucs = []
    for c in range(n_classes):
        b0, b1 = fit_univariate_logistic(train_x, (train_y == c).astype(np.int64))
        aucs.append(auc_rank(b0 + b1 * val_x, (val_y == c).astype(np.int64)))
    return float(np.mean(aucs))


@dataclass
class ScreenEntry:
    feature: str
    category: str
    auc: float
    selected: bool


@dataclass
class ScreeningReport:
    k: int
    entries: list[ScreenEntry]
    thresholds: dict[str, float]
    selected: list[str]
    train_ids: list[str] = field(default_factory=list)
    val_ids: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["feature,category,auc,selected"]
        for e in self.entries:
            lines.append(f"{e.feature},{e.category},{repr(e.auc)},{int(e.selected)}")
        return "\n".join(lines) + "\n"

    def selected_text(self) -> str:
        return "\n".join(self.selected) + "\n"


def _rows_for_ids(table: FeatureTable, ids: list[str]) -> np.ndarray:
    index = {nid: i for i, nid in enumerate(table.nodule_ids)}
    return np.array([index[nid] for nid in ids], dtype=np.int64)


def sis_select(table: FeatureTable, train_ids: list[str], val_ids: list[str],
               k: int, n_classes: int) -> tuple[ScreeningReport, np.ndarray]:
    """Screen every usable feature and keep the top k per family.

    A feature is usable when no row holds the NA sentinel. Ranking is by
    validation AUC descending with name-ascending tie breaks. Returns
    the report and the selected columns for every table row, ordered by
    family then rank.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    train_rows = _rows_for_ids(table, train_ids)
    val_rows = _rows_for_ids(table, val_ids)
    labels = np.asarray(table.labels, dtype=np.int64)
    train_y = labels[train_rows]
    val_y = labels[val_rows]

    usable: dict[str, list[tuple[str, float]]] = {fam: [] for fam in FAMILY_ORDER}
    for name in table.feature_names:
        col = table.column(name)
        if any(v is None for v in col):
            continue
        x = np.array(col, dtype=np.float64)
        auc = feature_auc(x[train_rows], train_y, x[val_rows], val_y, n_classes)
        usable[feature_category(name)].append((name, auc))

    entries: list[ScreenEntry] = []
    thresholds: dict[str, float] = {}
    selected: list[str] = []
    for fam in FAMILY_ORDER:
        scored = usable[fam]
        if not scored:
            raise CategoryStarved(f"family {fam} has no usable feature")
        ranked = sorted(scored, key=lambda t: (-t[1], t[0]))
        n_keep = min(k, len(ranked))
        keep_names = {name for name, _ in ranked[:n_keep]}
        thresholds[fam] = ranked[n_keep - 1][1]
        for name, auc in ranked:
            entries.append(ScreenEntry(name, fam, auc, name in keep_names))
        selected.extend(name for name, _ in ranked[:n_keep])

    reduced = np.column_stack(
        [np.array(table.column(name), dtype=np.float64) for name in selected])
    report = ScreeningReport(k=k, entries=entries, thresholds=thresholds,
                             selected=selected, train_ids=list(train_ids),
                             val_ids=list(val_ids))
    return report, reduced


def read_report_csv(text: str) -> ScreeningReport:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != "feature,category,auc,selected":
        raise ValueError("bad screening report header")
    entries = []
    for ln in lines[1:]:
        feature, category, auc, sel = ln.split(",")
        entries.append(ScreenEntry(feature, category, float(auc), sel == "1"))
    selected = [e.feature for e in entries if e.selected]
    thresholds: dict[str, float] = {}
    for e in entries:
        if e.selected:
            cur = thresholds.get(e.category)
            thresholds[e.category] = e.auc if cur is None else min(cur, e.auc)
    ks = {sum(1 for e in entries if e.selected and e.category == fam)
          for fam in {e.category for e in entries}}
    return ScreeningReport(k=max(ks), entries=entries, thresholds=thresholds,
                           selected=selected)


def read_selected_list(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
