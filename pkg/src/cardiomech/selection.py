"""Greedy forward-backward wrapper feature selection.

Subsets are scored by the cross-validated accuracy of the configured
classifier. The forward phase drops every feature whose removal does not
lower the best accuracy seen so far; the backward phase re-adds a discarded
feature only when that strictly improves it.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import cardiomech.evaluation as _evaluation
import cardiomech.event as _event
import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)


def evaluate_accuracy(
    dataset: _types.Dataset,
    feature_subset: Sequence[str],
    classifier_spec: _types.ClassifierSpec | None = None,
    cv_spec: _types.CVSpec | None = None,
    seed: int = 0,
) -> float:
    """Cross-validated accuracy of a feature subset.

    >>> import numpy as np
    >>> ds = _types.Dataset(np.zeros((2, 1)), ("NOR", "DCM"), ("a", "b"), ("f",))
    >>> evaluate_accuracy(ds, [])
    0.0

    :param dataset: Full dataset.
    :param feature_subset: Columns to use; an empty subset scores 0.
    :param classifier_spec: Classifier name and hyperparameters.
    :param cv_spec: Fold count.
    :param seed: Fold seed.
    :returns: Accuracy in ``[0, 1]``.
    :raises ValidationError: If a class has fewer members than folds.
    """
    if not feature_subset:
        return 0.0
    return _evaluation.cross_val_accuracy(
        dataset.select_features(feature_subset), classifier_spec, cv_spec, seed
    )


@dataclass
class _Search:
    """State of one selection run."""

    dataset: _types.Dataset
    classifier_spec: _types.ClassifierSpec | None
    cv_spec: _types.CVSpec | None
    seed: int
    on_event: _event.EventCallback | None
    trace: list[_types.SelectionStep] = field(
        default_factory=lambda: list[_types.SelectionStep]()
    )
    _cache: dict[frozenset[str], float] = field(
        default_factory=lambda: dict[frozenset[str], float]()
    )

    def __post_init__(self) -> None:
        self.order = {n: i for i, n in enumerate(self.dataset.feature_names)}

    def accuracy(self, subset: set[str]) -> float:
        key = frozenset(subset)
        if key not in self._cache:
            self._cache[key] = evaluate_accuracy(
                self.dataset,
                self.canonical(subset),
                self.classifier_spec,
                self.cv_spec,
                self.seed,
            )
        return self._cache[key]

    def canonical(self, names: set[str]) -> list[str]:
        return sorted(names, key=self.order.__getitem__)

    def record(
        self,
        feature: str,
        action: Literal["removed", "kept", "readded"],
        accuracy: float,
    ) -> None:
        step = len(self.trace)
        self.trace.append(_types.SelectionStep(step, feature, action, accuracy))
        _LOGGER.debug(
            "selection step %d: %s %s (%.4f)", step, action, feature, accuracy
        )
        _event.safe_emit(
            self.on_event,
            _event.SelectionStepRecorded(
                step=step, feature=feature, action=action, accuracy=accuracy
            ),
        )


def select_features(
    dataset: _types.Dataset,
    classifier_spec: _types.ClassifierSpec | None = None,
    cv_spec: _types.CVSpec | None = None,
    seed: int = 0,
    *,
    on_event: _event.EventCallback | None = None,
) -> _types.SelectionResult:
    """Run greedy forward-backward feature selection.

    Features are visited in the dataset's column order. The best accuracy
    starts at the accuracy of the full feature set, so the result is never
    worse than using every feature. A removal that would leave no feature is
    recorded as ``kept`` with the current best accuracy.

    :param dataset: Dataset whose columns are the candidate features.
    :param classifier_spec: Classifier name and hyperparameters.
    :param cv_spec: Fold count.
    :param seed: Fold seed.
    :param on_event: Optional callback receiving one
        :class:`~cardiomech.event.SelectionStepRecorded` per tentative move.
    :returns: Selected and discarded features with the trace.
    :raises ValidationError: With fewer than one feature, or if a class has
        fewer members than folds.
    """
    if not dataset.feature_names:
        raise ValidationError("feature selection needs at least one feature")
    search = _Search(dataset, classifier_spec, cv_spec, seed, on_event)
    kept = set(dataset.feature_names)
    discarded: list[str] = []
    acc_max = search.accuracy(kept)
    _LOGGER.info(
        "selection over %d feature(s); full-set accuracy %.4f", len(kept), acc_max
    )

    improved = True
    while improved:
        improved = False
        for name in search.canonical(kept):
            if len(kept) == 1:
                search.record(name, "kept", acc_max)
                continue
            acc = search.accuracy(kept - {name})
            if acc >= acc_max:
                kept.remove(name)
                discarded.append(name)
                improved = improved or acc > acc_max
                acc_max = acc
                search.record(name, "removed", acc)
            else:
                search.record(name, "kept", acc)

    improved = True
    while improved and discarded:
        improved = False
        for name in search.canonical(set(discarded)):
            acc = search.accuracy(kept | {name})
            if acc > acc_max:
                kept.add(name)
                discarded.remove(name)
                acc_max = acc
                improved = True
                search.record(name, "readded", acc)
            else:
                search.record(name, "kept", acc)

    selected = tuple(search.canonical(kept))
    _LOGGER.info(
        "selected %d of %d feature(s), accuracy %.4f",
        len(selected),
        len(dataset.feature_names),
        acc_max,
    )
    return _types.SelectionResult(
        selected=selected,
        discarded=tuple(discarded),
        acc_max=acc_max,
        trace=tuple(search.trace),
    )


@dataclass(frozen=True)
class FeatureImportance:
    """Contribution of one selected feature.

    :param feature: Feature name.
    :param without: Accuracy of the selected set without this feature.
    :param alone: Accuracy of this feature on its own.
    """

    feature: str
    without: float
    alone: float


def feature_importance(
    dataset: _types.Dataset,
    selected: Sequence[str],
    classifier_spec: _types.ClassifierSpec | None = None,
    cv_spec: _types.CVSpec | None = None,
    seed: int = 0,
) -> list[FeatureImportance]:
    """Score each selected feature by leaving it out and by using it alone.

    :param dataset: Dataset containing the selected columns.
    :param selected: Selected feature names.
    :param classifier_spec: Classifier name and hyperparameters.
    :param cv_spec: Fold count.
    :param seed: Fold seed.
    :returns: One entry per selected feature, in the given order.
    :raises ValidationError: If a name is unknown or a class is too small.
    """
    out: list[FeatureImportance] = []
    for name in selected:
        rest = [n for n in selected if n != name]
        out.append(
            FeatureImportance(
                feature=name,
                without=evaluate_accuracy(
                    dataset, rest, classifier_spec, cv_spec, seed
                ),
                alone=evaluate_accuracy(
                    dataset, [name], classifier_spec, cv_spec, seed
                ),
            )
        )
    return out


__all__ = [
    "FeatureImportance",
    "evaluate_accuracy",
    "feature_importance",
    "select_features",
]
