"""Feature matrices with missing values, labels and imputation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..features import APP_FEATURES, DEVICE_FEATURES, PROMOTION, WORKER


class DegenerateDataError(ValueError):
    """A dataset or fold with fewer than two instances of some class."""


@dataclass
class Dataset:
    X: np.ndarray  # float64, NaN marks a missing value
    y: np.ndarray  # int64 in {0, 1}
    feature_names: list[str]
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y):
            raise ValueError("X must be 2-D with one row per label")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names must match the number of columns")
        if len(self.y) and not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.y))]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.X)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names), [self.ids[i] for i in idx])

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.y.sum())
        return len(self.y) - n1, n1

    def require_both_classes(self, minimum: int = 2) -> None:
        n0, n1 = self.class_counts()
        if n0 < minimum or n1 < minimum:
            raise DegenerateDataError(f"need at least {minimum} instances per class, got {n0}/{n1}")


def _matrix(rows: Sequence[Sequence[float | None]]) -> np.ndarray:
    return np.array([[np.nan if v is None else float(v) for v in r] for r in rows], dtype=np.float64)


def app_dataset(instances, label_field: str = "label") -> Dataset:
    """Labelled, non-preinstalled app instances; promotion is the positive class."""
    keep = [i for i in instances if not i.preinstalled and getattr(i, label_field) is not None]
    X = _matrix([i.vector() for i in keep]) if keep else np.empty((0, len(APP_FEATURES)))
    y = [int(getattr(i, label_field) == PROMOTION) for i in keep]
    return Dataset(X, y, list(APP_FEATURES), [f"{i.device_id}/{i.app_id}" for i in keep])


def device_dataset(instances) -> Dataset:
    """Labelled device instances; worker is the positive class."""
    keep = [i for i in instances if i.label is not None]
    X = _matrix([i.vector() for i in keep]) if keep else np.empty((0, len(DEVICE_FEATURES)))
    y = [int(i.label == WORKER) for i in keep]
    return Dataset(X, y, list(DEVICE_FEATURES), [i.device_id for i in keep])


def unlabeled_matrix(instances, names: Sequence[str]) -> np.ndarray:
    return _matrix([[i.features[k] for k in names] for i in instances]) if instances \
        else np.empty((0, len(names)))


def _indicator_name(columns: list[str], taken: set[str]) -> str:
    base = columns[0].split("_", 1)[0] if len(columns) > 1 else columns[0]
    name = f"{base}_present"
    k = 2
    while name in taken:
        name = f"{base}_present{k}"
        k += 1
    return name


@dataclass
class Imputer:
    """Median imputation, optionally with 0/1 "present" indicator columns.

    With indicators, columns missing on exactly the same rows of the fitting
    data share one indicator; columns never missing there get none. Medians
    and indicator groups come from the fitting data only.
    """

    feature_names: list[str]
    medians: np.ndarray
    groups: list[list[int]]  # column indices sharing one indicator
    indicator_names: list[str]

    @classmethod
    def fit(cls, X: np.ndarray, feature_names: Sequence[str], indicators: bool = False) -> "Imputer":
        X = np.asarray(X, dtype=np.float64)
        miss = np.isnan(X)
        medians = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            col = X[~miss[:, j], j]
            medians[j] = float(np.median(col)) if len(col) else 0.0
        patterns: dict[bytes, list[int]] = {}
        for j in range(X.shape[1] if indicators else 0):
            if miss[:, j].any():
                patterns.setdefault(np.packbits(miss[:, j]).tobytes(), []).append(j)
        groups = sorted(patterns.values())
        names: list[str] = []
        taken = set(feature_names)
        for g in groups:
            nm = _indicator_name([feature_names[j] for j in g], taken)
            taken.add(nm)
            names.append(nm)
        return cls(list(feature_names), medians, groups, names)

    @property
    def output_names(self) -> list[str]:
        return self.feature_names + self.indicator_names

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} columns, got {X.shape[1]}")
        miss = np.isnan(X)
        filled = np.where(miss, self.medians, X)
        ind = np.column_stack([(~miss[:, g].all(axis=1)).astype(np.float64) for g in self.groups]) \
            if self.groups else np.empty((len(X), 0))
        return np.hstack([filled, ind])

    def to_obj(self) -> dict:
        return {"feature_names": self.feature_names, "medians": self.medians.tolist(),
                "groups": self.groups, "indicator_names": self.indicator_names}

    @classmethod
    def from_obj(cls, obj: dict) -> "Imputer":
        return cls(list(obj["feature_names"]), np.array(obj["medians"], dtype=np.float64),
                   [list(g) for g in obj["groups"]], list(obj["indicator_names"]))
