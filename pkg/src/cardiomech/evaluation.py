"""Cross-validation, confusion matrices and learning curves.

All protocols standardize features with training-fold statistics only (each
backend does so inside ``fit``) and derive every split from an explicit seed.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from sklearn.metrics import confusion_matrix as _sk_confusion_matrix
from sklearn.model_selection import StratifiedKFold, StratifiedShuffleSplit

import cardiomech.registry as _registry
import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

DEFAULT_REPEATS = 50

Split = tuple[NDArray[np.int64], NDArray[np.int64]]


def stratified_folds(y: NDArray[np.int64], folds: int, seed: int) -> list[Split]:
    """Deterministic stratified k-fold splits.

    :param y: Class index per case.
    :param folds: Number of folds.
    :param seed: Shuffling seed.
    :returns: ``(train indices, test indices)`` per fold.
    :raises ValidationError: If a present class has fewer members than folds.
    """
    classes, counts = np.unique(y, return_counts=True)
    small = [int(c) for c, n in zip(classes, counts, strict=True) if n < folds]
    if small:
        raise ValidationError(
            f"class index(es) {small} have fewer than {folds} cases for {folds}-fold CV"
        )
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    placeholder = np.zeros((y.size, 1))
    return [
        (np.asarray(tr, dtype=np.int64), np.asarray(te, dtype=np.int64))
        for tr, te in skf.split(placeholder, y)
    ]


def _fit_predict(  # noqa: PLR0913
    spec: _types.ClassifierSpec,
    registry: _registry.ClassifierRegistry,
    x_train: NDArray[np.float64],
    y_train: NDArray[np.int64],
    x_test: NDArray[np.float64],
    n_classes: int,
) -> NDArray[np.int64]:
    clf = registry.create(spec)
    clf.fit(x_train, y_train, n_classes)
    return clf.predict(x_test)


def cross_val_predict(
    dataset: _types.Dataset,
    classifier_spec: _types.ClassifierSpec | None = None,
    cv_spec: _types.CVSpec | None = None,
    seed: int = 0,
    registry: _registry.ClassifierRegistry | None = None,
) -> NDArray[np.int64]:
    """Out-of-fold class predictions.

    :param dataset: Dataset to evaluate.
    :param classifier_spec: Classifier name and hyperparameters.
    :param cv_spec: Fold count.
    :param seed: Fold seed.
    :param registry: Classifier registry; the default registry when None.
    :returns: Predicted class index per case.
    :raises ValidationError: If a class has fewer members than folds.
    """
    spec = classifier_spec or _types.ClassifierSpec()
    cv = cv_spec or _types.CVSpec()
    reg = registry or _registry.default_registry
    y = dataset.y
    pred = np.empty_like(y)
    for train, test in stratified_folds(y, cv.folds, seed):
        pred[test] = _fit_predict(
            spec,
            reg,
            dataset.features[train],
            y[train],
            dataset.features[test],
            len(dataset.class_set),
        )
    return pred


def cross_val_accuracy(
    dataset: _types.Dataset,
    classifier_spec: _types.ClassifierSpec | None = None,
    cv_spec: _types.CVSpec | None = None,
    seed: int = 0,
    registry: _registry.ClassifierRegistry | None = None,
) -> float:
    """Fraction of cases classified correctly out of fold.

    :param dataset: Dataset to evaluate.
    :param classifier_spec: Classifier name and hyperparameters.
    :param cv_spec: Fold count.
    :param seed: Fold seed.
    :param registry: Classifier registry.
    :returns: Accuracy in ``[0, 1]``.
    :raises ValidationError: If a class has fewer members than folds.
    """
    pred = cross_val_predict(dataset, classifier_spec, cv_spec, seed, registry)
    return float(np.mean(pred == dataset.y))


def confusion_matrix(
    truth: Sequence[str], predicted: Sequence[str], class_set: Sequence[str]
) -> NDArray[np.int64]:
    """Count matrix with truth along rows and predictions along columns.

    :param truth: True class names.
    :param predicted: Predicted class names.
    :param class_set: Row and column order.
    :returns: Matrix of shape ``(K, K)``.
    :raises ValidationError: On length mismatch or unknown class names.
    """
    if len(truth) != len(predicted):
        raise ValidationError(
            f"{len(truth)} true labels but {len(predicted)} predictions"
        )
    unknown = sorted((set(truth) | set(predicted)) - set(class_set))
    if unknown:
        raise ValidationError(f"unknown class(es): {unknown}")
    if not truth:
        return np.zeros((len(class_set), len(class_set)), dtype=np.int64)
    return np.asarray(
        _sk_confusion_matrix(list(truth), list(predicted), labels=list(class_set)),
        dtype=np.int64,
    )


def train_test_accuracy(
    train: _types.Dataset,
    test: _types.Dataset,
    classifier_spec: _types.ClassifierSpec | None = None,
    registry: _registry.ClassifierRegistry | None = None,
) -> tuple[float, float]:
    """Train once and report accuracy on the training and the test set.

    :param train: Training dataset.
    :param test: Test dataset with the same feature columns.
    :param classifier_spec: Classifier name and hyperparameters.
    :param registry: Classifier registry.
    :returns: ``(train accuracy, test accuracy)``.
    :raises ValidationError: If the feature columns differ.
    """
    if train.feature_names != test.feature_names:
        raise ValidationError("train and test datasets have different features")
    reg = registry or _registry.default_registry
    clf = reg.create(classifier_spec or _types.ClassifierSpec())
    clf.fit(train.features, train.y, len(train.class_set))
    train_acc = float(np.mean(clf.predict(train.features) == train.y))
    test_acc = float(np.mean(clf.predict(test.features) == test.y))
    return train_acc, test_acc


@dataclass(frozen=True)
class CurvePoint:
    """Learning-curve summary of one training size.

    :param size: Training subset size.
    :param mean_accuracy: Mean accuracy over repeats.
    :param std_accuracy: Population std over repeats.
    :param repeats: Number of evaluated subsets.
    """

    size: int
    mean_accuracy: float
    std_accuracy: float
    repeats: int


def learning_curve(  # noqa: PLR0913
    dataset: _types.Dataset,
    sizes: Sequence[int],
    repeats: int = DEFAULT_REPEATS,
    classifier_spec: _types.ClassifierSpec | None = None,
    seed: int = 0,
    cv_spec: _types.CVSpec | None = None,
    registry: _registry.ClassifierRegistry | None = None,
) -> list[CurvePoint]:
    """Accuracy as a function of training-set size.

    For every size, ``repeats`` stratified random subsets are drawn; each is
    trained on and evaluated on the remaining cases. The full dataset has a
    single subset and no remainder, so its accuracy is the cross-validated
    accuracy and its std is 0.

    :param dataset: Training pool.
    :param sizes: Subset sizes.
    :param repeats: Subsets per size.
    :param classifier_spec: Classifier name and hyperparameters.
    :param seed: Subsampling seed.
    :param cv_spec: Fold count used for the full-size point.
    :param registry: Classifier registry.
    :returns: One point per size, in input order.
    :raises ValidationError: If a size cannot be stratified.
    """
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    spec = classifier_spec or _types.ClassifierSpec()
    reg = registry or _registry.default_registry
    y = dataset.y
    n = dataset.n_cases
    n_present = int(np.unique(y).size)
    points: list[CurvePoint] = []
    for size in sizes:
        if size == n:
            acc = cross_val_accuracy(dataset, spec, cv_spec, seed, reg)
            points.append(CurvePoint(size, acc, 0.0, 1))
            continue
        if size < n_present or n - size < n_present:
            raise ValidationError(
                f"training size {size} cannot be stratified over {n_present} "
                f"classes with {n} cases"
            )
        splitter = StratifiedShuffleSplit(
            n_splits=repeats, train_size=size, test_size=n - size, random_state=seed
        )
        accs = [
            float(
                np.mean(
                    _fit_predict(
                        spec,
                        reg,
                        dataset.features[tr],
                        y[tr],
                        dataset.features[te],
                        len(dataset.class_set),
                    )
                    == y[te]
                )
            )
            for tr, te in splitter.split(np.zeros((n, 1)), y)
        ]
        points.append(
            CurvePoint(size, float(np.mean(accs)), float(np.std(accs)), len(accs))
        )
        _LOGGER.info(
            "learning curve size %d: %.3f +/- %.3f",
            size,
            points[-1].mean_accuracy,
            points[-1].std_accuracy,
        )
    return points


__all__ = [
    "DEFAULT_REPEATS",
    "CurvePoint",
    "confusion_matrix",
    "cross_val_accuracy",
    "cross_val_predict",
    "learning_curve",
    "stratified_folds",
    "train_test_accuracy",
]
