"""App-usage and device classifiers, class balancing and cross-validation."""

from .dataset import Dataset, DegenerateDataError, Imputer, app_dataset, device_dataset
from .evaluation import ModelReport, cross_validate, metrics, roc_auc, stratified_folds
from .forest import RandomForest
from .kernels import BACKEND
from .knn import KNN
from .logistic import LogisticRegression
from .model import ALGORITHMS, Model, ModelFormatError, train
from .sampling import smote, undersample

__all__ = [
    "ALGORITHMS", "BACKEND", "Dataset", "DegenerateDataError", "Imputer", "KNN", "LogisticRegression",
    "Model", "ModelFormatError", "ModelReport", "RandomForest", "app_dataset", "cross_validate",
    "device_dataset", "metrics", "roc_auc", "smote", "stratified_folds", "train", "undersample",
]
