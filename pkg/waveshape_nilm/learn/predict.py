"""
Model-agnostic prediction and scoring.
"""

from functools import singledispatch
from typing import Any, Optional, Sequence

import numpy as np

from ..errors import ArgumentError
from .ann import AnnModel
from .boost import BoostModel
from .svm import SvmModel


def _check_dims(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ArgumentError(f"Model expects {n_features} features, got shape {X.shape}")
    return X


@singledispatch
def predict_many(model: Any, X: np.ndarray) -> np.ndarray:
    """Class ids for the rows of X."""
    raise ArgumentError(f"Unsupported model type {type(model).__name__}")


@predict_many.register
def _(model: AnnModel, X: np.ndarray) -> np.ndarray:
    return model.predict(_check_dims(X, model.n_features))


@predict_many.register
def _(model: SvmModel, X: np.ndarray) -> np.ndarray:
    return model.predict(_check_dims(X, model.n_features))


@predict_many.register
def _(model: BoostModel, X: np.ndarray) -> np.ndarray:
    return model.predict(_check_dims(X, model.n_features))


def predict(model: Any, x: Sequence[float]) -> int:
    """Class id of a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ArgumentError(f"predict takes one feature vector, got shape {x.shape}")
    return int(predict_many(model, x)[0])


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int], n_classes: Optional[int] = None) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    truth = np.asarray(truth, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    if truth.shape != predicted.shape:
        raise ArgumentError(f"Got {len(truth)} true labels and {len(predicted)} predictions")
    if n_classes is None:
        n_classes = int(max(truth.max(initial=-1), predicted.max(initial=-1))) + 1
    matrix = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(matrix, (truth, predicted), 1)
    return matrix
