"""Class balancing: SMOTE oversampling and random undersampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, DegenerateDataError
from .knn import minmax_fit, nearest


@dataclass(frozen=True)
class Synthetic:
    """Synthetic rows ``X[base] + gap * (X[neighbor] - X[base])``, indices into the minority rows."""

    rows: np.ndarray
    base: np.ndarray
    neighbor: np.ndarray
    gap: np.ndarray


def _counts_needed(n_min: int, n_maj: int, target_ratio: float) -> int:
    if not 0 < target_ratio <= 1:
        raise ValueError("target_ratio must be in (0, 1]")
    return max(0, int(round(target_ratio * n_maj)) - n_min)


def smote_rows(X_min: np.ndarray, n_new: int, k: int, rng: np.random.Generator,
               scale: tuple[np.ndarray, np.ndarray] | None = None) -> Synthetic:
    """Interpolate ``n_new`` rows between minority points and their minority neighbours.

    Neighbours are searched in min-max scaled space (``scale`` = (lo, span),
    fit on ``X_min`` when omitted); interpolation is in the original space.
    """
    X_min = np.asarray(X_min, dtype=np.float64)
    m = len(X_min)
    if m < 2:
        raise DegenerateDataError("SMOTE needs at least two minority instances")
    if k < 1:
        raise ValueError("k must be at least 1")
    k = min(k, m - 1)
    lo, span = scale if scale is not None else minmax_fit(X_min)
    nn = nearest((X_min - lo) / span, (X_min - lo) / span, k, exclude_self=True)
    base = rng.integers(0, m, n_new)
    neighbor = nn[base, rng.integers(0, k, n_new)]
    gap = rng.random(n_new)
    rows = X_min[base] + gap[:, None] * (X_min[neighbor] - X_min[base])
    return Synthetic(rows, base, neighbor, gap)


def smote(data: Dataset, target_ratio: float = 1.0, k: int = 5, seed: int = 0) -> Dataset:
    """Append synthetic minority rows until minority/majority reaches ``target_ratio``.

    ``data`` must have no missing values. Synthetic ids are
    ``smote:<base id>:<neighbour id>``.
    """
    if np.isnan(data.X).any():
        raise ValueError("impute missing values before SMOTE")
    n0, n1 = data.class_counts()
    minority = 1 if n1 < n0 else 0
    min_idx = np.flatnonzero(data.y == minority)
    n_new = _counts_needed(len(min_idx), len(data) - len(min_idx), target_ratio)
    if n_new == 0:
        return data
    syn = smote_rows(data.X[min_idx], n_new, k, np.random.default_rng(seed), minmax_fit(data.X))
    ids = [f"smote:{data.ids[min_idx[b]]}:{data.ids[min_idx[n]]}" for b, n in zip(syn.base, syn.neighbor)]
    return Dataset(np.vstack([data.X, syn.rows]),
                   np.concatenate([data.y, np.full(n_new, minority, dtype=np.int64)]),
                   list(data.feature_names), data.ids + ids)


def undersample(data: Dataset, target_ratio: float = 1.0, seed: int = 0) -> Dataset:
    """Drop random majority rows until minority/majority reaches ``target_ratio``."""
    n0, n1 = data.class_counts()
    minority = 1 if n1 < n0 else 0
    min_idx = np.flatnonzero(data.y == minority)
    maj_idx = np.flatnonzero(data.y != minority)
    if not 0 < target_ratio <= 1:
        raise ValueError("target_ratio must be in (0, 1]")
    keep_maj = min(len(maj_idx), int(round(len(min_idx) / target_ratio)))
    rng = np.random.default_rng(seed)
    kept = np.sort(np.concatenate([min_idx, rng.choice(maj_idx, keep_maj, replace=False)]))
    return data.subset(kept)
