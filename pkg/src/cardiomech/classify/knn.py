"""k-nearest-neighbour classification on standardized features.

Distance ties are broken by training case order and vote ties toward the
smaller class index.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist

import cardiomech.classify.logreg as _logreg
import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)


def knn_predict(
    train_x: NDArray[np.float64],
    train_y: NDArray[np.int64],
    n_classes: int,
    x: ArrayLike,
    k: int,
) -> NDArray[np.int64]:
    """Classify query rows by majority vote of their k nearest training rows.

    Standardization statistics come from ``train_x``.

    :param train_x: Training matrix (cases, features).
    :param train_y: Class index per training case.
    :param n_classes: Number of declared classes.
    :param x: Query matrix or single query row.
    :param k: Number of neighbours, between 1 and the training size.
    :returns: Class index per query row.
    :raises ValidationError: If the training set is empty or k is out of range.
    """
    n = train_x.shape[0]
    if n == 0:
        raise ValidationError("k-NN needs a non-empty training set")
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in 1..{n}, got {k}")
    query = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if query.shape[1] != train_x.shape[1]:
        raise ValidationError(
            f"expected {train_x.shape[1]} features, got {query.shape[1]}"
        )
    mean, std = _logreg.fit_standardization(train_x)
    dist = cdist((query - mean) / std, (train_x - mean) / std, metric="euclidean")
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    out = np.empty(query.shape[0], dtype=np.int64)
    for row, idx in enumerate(nearest):
        votes = np.bincount(train_y[idx], minlength=n_classes)
        out[row] = int(np.argmax(votes))
    return out


def knn_classify(train: _types.Dataset, x: ArrayLike, k: int = 5) -> str:
    """Classify one case against a training dataset.

    :param train: Training dataset.
    :param x: Feature row.
    :param k: Number of neighbours.
    :returns: Predicted class name.
    :raises ValidationError: If the training set is empty or k is out of range.
    """
    index = knn_predict(train.features, train.y, len(train.class_set), x, k)[0]
    return train.class_set[int(index)]


class KNNClassifier(_types.Classifier):
    """Classifier backend wrapping :func:`knn_predict`.

    :param params: Accepts ``k`` (default 5).
    """

    def __init__(self, params: Mapping[str, float | int] | None = None) -> None:
        """Create an untrained classifier.

        :param params: Hyperparameters.
        :returns: None
        :raises ConfigError: On unknown keys.
        """
        params = params or {}
        _types.check_keys(params, ("k",), "knn")
        self.k = int(params.get("k", 5))
        self._x: NDArray[np.float64] | None = None
        self._y: NDArray[np.int64] | None = None
        self._n_classes = 0

    def fit(
        self, features: NDArray[np.float64], labels: NDArray[np.int64], n_classes: int
    ) -> None:
        """Store the training data.

        :param features: Matrix (cases, features).
        :param labels: Class index per case.
        :param n_classes: Number of declared classes.
        :returns: None
        :raises ValidationError: If k exceeds the training size.
        """
        x = np.asarray(features, dtype=np.float64)
        if not 1 <= self.k <= x.shape[0]:
            raise ValidationError(f"k must lie in 1..{x.shape[0]}, got {self.k}")
        self._x = x
        self._y = np.asarray(labels, dtype=np.int64)
        self._n_classes = n_classes

    def predict(self, features: NDArray[np.float64]) -> NDArray[np.int64]:
        """Predict class indices.

        :param features: Matrix (cases, features).
        :returns: Class index per case.
        :raises ValidationError: If the classifier is untrained.
        """
        if self._x is None or self._y is None:
            raise ValidationError("classifier has not been trained")
        return knn_predict(self._x, self._y, self._n_classes, features, self.k)

    def to_dict(self) -> dict[str, Any]:
        """Serialize the stored training data.

        :raises ValidationError: If the classifier is untrained.
        """
        if self._x is None or self._y is None:
            raise ValidationError("classifier has not been trained")
        return {
            "name": "knn",
            "model": {
                "k": self.k,
                "n_classes": self._n_classes,
                "features": self._x.tolist(),
                "labels": self._y.tolist(),
            },
        }

    @classmethod
    def from_model(cls, model: Mapping[str, Any]) -> KNNClassifier:
        """Restore a classifier from the ``model`` part of :meth:`to_dict`.

        :param model: Mapping decoded from JSON.
        :returns: Trained classifier.
        :raises ConfigError: On unknown keys.
        """
        _types.check_keys(model, ("k", "n_classes", "features", "labels"), "knn model")
        clf = cls({"k": int(model["k"])})
        clf.fit(
            np.asarray(model["features"], dtype=np.float64),
            np.asarray(model["labels"], dtype=np.int64),
            int(model["n_classes"]),
        )
        return clf


__all__ = ["KNNClassifier", "knn_classify", "knn_predict"]
