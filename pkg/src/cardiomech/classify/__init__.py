"""Classifier backends for CardioMech."""

from __future__ import annotations

import cardiomech.classify.knn as _knn
import cardiomech.classify.logreg as _logreg

KNNClassifier = _knn.KNNClassifier
LogRegClassifier = _logreg.LogRegClassifier
LogRegHyper = _logreg.LogRegHyper
LogRegModel = _logreg.LogRegModel
knn_classify = _knn.knn_classify
predict = _logreg.predict
train_logreg = _logreg.train_logreg

__all__ = [
    "KNNClassifier",
    "LogRegClassifier",
    "LogRegHyper",
    "LogRegModel",
    "knn_classify",
    "predict",
    "train_logreg",
]
