"""Random forest of Gini trees with mean-decrease-in-impurity importances."""

from __future__ import annotations

import math

import numpy as np

from . import kernels


class RandomForest:
    name = "random_forest"

    def __init__(self, n_estimators: int = 100, max_features: str | int = "sqrt",
                 max_depth: int | None = None, min_samples_leaf: int = 1, bootstrap: bool = True,
                 seed: int = 0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be positive")
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed
        self.arrays: dict[str, np.ndarray] | None = None

    def params(self) -> dict:
        return {"n_estimators": self.n_estimators, "max_features": self.max_features,
                "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def _mtry(self, p: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(p)))
        if self.max_features is None:
            return p
        return max(1, min(int(self.max_features), p))

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, p = X.shape
        rng = np.random.default_rng(self.seed)
        mtry = self._mtry(p)
        depth = -1 if self.max_depth is None else self.max_depth
        parts: dict[str, list[np.ndarray]] = {k: [] for k in
                                              ("feature", "threshold", "left", "right", "value", "count")}
        roots, importances = [], []
        offset = 0
        for _ in range(self.n_estimators):
            samples = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree_seed = int(rng.integers(1, 2**63))
            feat, thr, left, right, value, count, imp = kernels.build_tree(
                X, y, samples, mtry, depth, self.min_samples_leaf, tree_seed)
            for k, arr in zip(parts, (feat, thr, left, right, value, count)):
                parts[k].append(arr)
            roots.append(offset)
            offset += len(feat)
            importances.append(imp / count[0])
        self.arrays = {k: np.concatenate(v) for k, v in parts.items()}
        self.arrays["roots"] = np.array(roots, dtype=np.int64)
        self.arrays["tree_importances"] = np.vstack(importances)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.arrays is None:
            raise RuntimeError("model is not fitted")
        a = self.arrays
        return kernels.predict_forest(X, a["feature"], a["threshold"], a["left"], a["right"],
                                      a["value"], a["roots"])

    def gini_importance(self) -> np.ndarray:
        """Mean over trees of each feature's weighted impurity decrease, summing to 1."""
        if self.arrays is None:
            raise RuntimeError("model is not fitted")
        mean = self.arrays["tree_importances"].mean(axis=0)
        total = mean.sum()
        return mean / total if total > 0 else mean

    def get_arrays(self) -> dict[str, np.ndarray]:
        return dict(self.arrays or {})

    def set_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.arrays = dict(arrays)
