"""K-nearest-neighbour classifier on min-max scaled features."""

from __future__ import annotations

import numpy as np

CHUNK_ROWS = 512


def minmax_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    return lo, np.where(span > 0, span, 1.0)


def nearest(train: np.ndarray, query: np.ndarray, k: int, exclude_self: bool = False) -> np.ndarray:
    """Indices of the ``k`` nearest training rows per query row.

    Distance ties are broken by training-row order. With ``exclude_self`` the
    query rows are the training rows and each row skips itself.
    """
    out = np.empty((len(query), k), dtype=np.int64)
    sq_train = np.einsum("ij,ij->i", train, train)
    for s in range(0, len(query), CHUNK_ROWS):
        q = query[s:s + CHUNK_ROWS]
        d = np.einsum("ij,ij->i", q, q)[:, None] + sq_train[None, :] - 2.0 * q @ train.T
        np.maximum(d, 0.0, out=d)
        if exclude_self:
            rows = np.arange(len(q))
            d[rows, s + rows] = np.inf
        out[s:s + len(q)] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


class KNN:
    name = "knn"

    def __init__(self, k: int = 5, seed: int = 0):
        if k < 1:
            raise ValueError("k must be positive")
        self.k = k
        self.seed = seed  # unused: prediction is deterministic
        self.lo: np.ndarray | None = None
        self.span: np.ndarray | None = None
        self.X: np.ndarray | None = None
        self.y: np.ndarray | None = None

    def params(self) -> dict:
        return {"k": self.k, "seed": self.seed}

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNN":
        X = np.asarray(X, dtype=np.float64)
        self.lo, self.span = minmax_fit(X)
        self.X = (X - self.lo) / self.span
        self.y = np.asarray(y, dtype=np.int64)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Share of positives among the ``k`` nearest training points."""
        if self.X is None:
            raise RuntimeError("model is not fitted")
        k = min(self.k, len(self.X))
        idx = nearest(self.X, (np.asarray(X, dtype=np.float64) - self.lo) / self.span, k)
        return self.y[idx].mean(axis=1)

    def get_arrays(self) -> dict[str, np.ndarray]:
        return {"lo": self.lo, "span": self.span, "X": self.X, "y": self.y}

    def set_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.lo, self.span, self.X, self.y = arrays["lo"], arrays["span"], arrays["X"], arrays["y"]
