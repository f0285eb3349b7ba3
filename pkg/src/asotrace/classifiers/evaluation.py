"""Repeated stratified k-fold cross-validation and the metric suite."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..stats import average_ranks
from .dataset import Dataset, DegenerateDataError, Imputer
from .forest import RandomForest
from .model import THRESHOLD, make_estimator
from .sampling import smote, undersample

SAMPLINGS = ("none", "oversample", "undersample")
METRICS = ("precision", "recall", "f1", "auc", "fpr", "accuracy")


def confusion(y: np.ndarray, pred: np.ndarray) -> dict[str, int]:
    y = np.asarray(y, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return {"tp": int(((pred == 1) & (y == 1)).sum()), "fp": int(((pred == 1) & (y == 0)).sum()),
            "fn": int(((pred == 0) & (y == 1)).sum()), "tn": int(((pred == 0) & (y == 0)).sum())}


def rates(c: dict[str, int]) -> dict[str, float]:
    """Precision, recall, F1, FPR and accuracy; a ratio with a zero denominator is 0."""
    tp, fp, fn, tn = c["tp"], c["fp"], c["fn"], c["tn"]
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    total = tp + fp + fn + tn
    return {"precision": p, "recall": r, "f1": f1, "fpr": fpr, "accuracy": (tp + tn) / total if total else 0.0}


def roc_auc(y, score) -> float:
    """Rank-statistic AUC: P(score of a positive > score of a negative), ties count half."""
    y = np.asarray(y, dtype=np.int64)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        raise DegenerateDataError("AUC needs both classes")
    ranks = average_ranks(score)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def metrics(y, score, threshold: float = THRESHOLD) -> dict[str, float]:
    score = np.asarray(score, dtype=np.float64)
    pred = (score >= threshold).astype(np.int64)
    return {**rates(confusion(y, pred)), "auc": roc_auc(y, score)}


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Test-index arrays of ``k`` folds with per-class counts differing by at most one."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        assign[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return [np.flatnonzero(assign == f) for f in range(k)]


@dataclass
class ModelReport:
    algo: str
    sampling: str
    precision: float
    recall: float
    f1: float
    auc: float
    fpr: float
    accuracy: float
    folds: list[dict] = field(default_factory=list)
    feature_importances: list[tuple[str, float]] | None = None
    dataset: str = ""

    def summary(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def to_obj(self) -> dict:
        return {"dataset": self.dataset, "algo": self.algo, "sampling": self.sampling, **self.summary(),
                "folds": self.folds,
                "feature_importances": [list(t) for t in self.feature_importances]
                if self.feature_importances is not None else None}

    def rank_of(self, prefix: str) -> int | None:
        """1-based best rank of any feature whose name starts with ``prefix``."""
        for i, (name, _) in enumerate(self.feature_importances or ()):
            if name.startswith(prefix):
                return i + 1
        return None


def _balance(train: Dataset, sampling: str, seed) -> Dataset:
    if sampling == "none":
        return train
    seed_int = int(np.random.default_rng(seed).integers(0, 2**63))
    if sampling == "oversample":
        return smote(train, 1.0, 5, seed_int)
    if sampling == "undersample":
        return undersample(train, 1.0, seed_int)
    raise ValueError(f"unknown sampling {sampling!r}; choose from {SAMPLINGS}")


def cross_validate(algo: str, data: Dataset, k: int = 10, repeats: int = 5, sampling: str = "none",
                   seed: int = 0, params: dict | None = None, missing_indicators: bool = False,
                   dataset: str = "") -> ModelReport:
    """Repeated stratified k-fold CV.

    Imputation and class balancing are fit on each training fold only; the
    validation fold keeps its original rows. Precision, recall, F1, FPR and
    accuracy come from the confusion counts pooled over all folds and
    repeats; AUC is the mean of per-fold AUCs. Forest importances are the
    mean over folds.
    """
    if sampling not in SAMPLINGS:
        raise ValueError(f"unknown sampling {sampling!r}; choose from {SAMPLINGS}")
    data.require_both_classes(minimum=k)
    pooled = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    folds: list[dict] = []
    importance: dict[str, float] = {}
    n_models = 0
    for rep in range(repeats):
        rng = np.random.default_rng([seed, rep])
        for f, test_idx in enumerate(stratified_folds(data.y, k, rng)):
            train_idx = np.setdiff1d(np.arange(len(data)), test_idx)
            train, test = data.subset(train_idx), data.subset(test_idx)
            if len(set(test.y.tolist())) < 2:
                raise DegenerateDataError(f"repeat {rep} fold {f} has a single class")
            train.require_both_classes()
            imputer = Imputer.fit(train.X, train.feature_names, missing_indicators)
            fitted = Dataset(imputer.transform(train.X), train.y, imputer.output_names, train.ids)
            fitted = _balance(fitted, sampling, [seed, rep, f, 1])
            est = make_estimator(algo, params, int(np.random.default_rng([seed, rep, f]).integers(0, 2**63)))
            est.fit(fitted.X, fitted.y)
            score = est.predict_proba(imputer.transform(test.X))
            pred = (score >= THRESHOLD).astype(np.int64)
            c = confusion(test.y, pred)
            for key in pooled:
                pooled[key] += c[key]
            folds.append({"repeat": rep, "fold": f, "n_train": len(fitted), "n_test": len(test),
                          **c, **rates(c), "auc": roc_auc(test.y, score)})
            if isinstance(est, RandomForest):
                for name, v in zip(imputer.output_names, est.gini_importance()):
                    importance[name] = importance.get(name, 0.0) + float(v)
                n_models += 1
    ranked = None
    if n_models:
        ranked = sorted(((n, v / n_models) for n, v in importance.items()), key=lambda t: (-t[1], t[0]))
    r = rates(pooled)
    return ModelReport(algo, sampling, r["precision"], r["recall"], r["f1"],
                       float(np.mean([fd["auc"] for fd in folds])), r["fpr"], r["accuracy"], folds, ranked,
                       dataset)


TABLE_COLUMNS = ("dataset", "model", "sampling", "precision", "recall", "f1", "auc", "fpr", "accuracy")


def write_reports_csv(path: str | Path, reports: Sequence[ModelReport]) -> None:
    """One row per report in the layout of a classifier comparison table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for rep in reports:
            w.writerow([rep.dataset, rep.algo, rep.sampling, *(f"{getattr(rep, m):.6f}" for m in METRICS[:3]),
                        f"{rep.auc:.6f}", f"{rep.fpr:.6f}", f"{rep.accuracy:.6f}"])


def format_reports(reports: Sequence[ModelReport]) -> str:
    lines = [f"{'dataset':<18}{'model':<22}{'sampling':<13}{'precision':>10}{'recall':>10}{'f1':>10}{'auc':>10}{'fpr':>10}"]
    for rep in reports:
        lines.append(f"{rep.dataset:<18}{rep.algo:<22}{rep.sampling:<13}{rep.precision:>10.4f}{rep.recall:>10.4f}"
                     f"{rep.f1:>10.4f}{rep.auc:>10.4f}{rep.fpr:>10.4f}")
    return "\n".join(lines) + "\n"
