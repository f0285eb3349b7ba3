"""Trained models (imputer + estimator) and their on-disk container.

The container is a zip holding ``manifest.json`` (format version, algorithm,
parameters, feature names, imputer state) and ``arrays.npz`` (estimator
arrays).
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, Imputer
from .forest import RandomForest
from .knn import KNN
from .logistic import LogisticRegression

FORMAT = "asotrace-model"
FORMAT_VERSION = 1
ALGORITHMS = {cls.name: cls for cls in (LogisticRegression, KNN, RandomForest)}
THRESHOLD = 0.5
ZIP_DATE = (1980, 1, 1, 0, 0, 0)  # fixed entry dates keep saved models byte-stable


class ModelFormatError(ValueError):
    pass


def _zip_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, data)


def npz_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    """An ``.npz`` archive readable by ``np.load``, without wall-clock entry dates."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name in sorted(arrays):
            arr = io.BytesIO()
            np.lib.format.write_array(arr, np.asarray(arrays[name]), allow_pickle=False)
            _zip_entry(zf, f"{name}.npy", arr.getvalue())
    return buf.getvalue()


def make_estimator(algo: str, params: dict | None = None, seed: int = 0):
    try:
        cls = ALGORITHMS[algo]
    except KeyError:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {sorted(ALGORITHMS)}") from None
    return cls(**{**(params or {}), "seed": seed})


@dataclass
class Model:
    algo: str
    feature_names: list[str]
    imputer: Imputer
    estimator: object

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.imputer.transform(X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.estimator.predict_proba(self.transform(X)), dtype=np.float64)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= THRESHOLD).astype(np.int64)

    def feature_importances(self) -> list[tuple[str, float]]:
        """Ranked (name, share) pairs; forests only."""
        if not isinstance(self.estimator, RandomForest):
            raise TypeError("feature importances need a random forest")
        imp = self.estimator.gini_importance()
        names = self.imputer.output_names
        return sorted(zip(names, imp.tolist()), key=lambda t: (-t[1], t[0]))

    def save(self, path: str | Path) -> None:
        manifest = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "algo": self.algo,
            "params": self.estimator.params(),
            "feature_names": self.feature_names,
            "imputer": self.imputer.to_obj(),
        }
        with zipfile.ZipFile(path, "w") as zf:
            _zip_entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode())
            _zip_entry(zf, "arrays.npz", npz_bytes(self.estimator.get_arrays()))

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        try:
            with zipfile.ZipFile(path) as zf:
                manifest = json.loads(zf.read("manifest.json"))
                arrays = dict(np.load(io.BytesIO(zf.read("arrays.npz"))))
        except (KeyError, ValueError, zipfile.BadZipFile) as exc:
            raise ModelFormatError(f"{path}: not a model container ({exc})") from None
        if manifest.get("format") != FORMAT:
            raise ModelFormatError(f"{path}: unexpected format {manifest.get('format')!r}")
        if manifest.get("version") != FORMAT_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {manifest.get('version')}")
        params = dict(manifest["params"])
        seed = params.pop("seed", 0)
        est = make_estimator(manifest["algo"], params, seed)
        est.set_arrays(arrays)
        return cls(manifest["algo"], list(manifest["feature_names"]), Imputer.from_obj(manifest["imputer"]), est)


def train(algo: str, data: Dataset, params: dict | None = None, seed: int = 0,
          missing_indicators: bool = False) -> Model:
    """Impute with training medians, then fit; needs two instances of each class."""
    data.require_both_classes()
    imputer = Imputer.fit(data.X, data.feature_names, missing_indicators)
    est = make_estimator(algo, params, seed)
    est.fit(imputer.transform(data.X), data.y)
    return Model(algo, list(data.feature_names), imputer, est)
