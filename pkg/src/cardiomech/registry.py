"""Named classifier registry for CardioMech.

Classifiers are selected by a :class:`~cardiomech.types.ClassifierSpec`
(name plus hyperparameters). ``logreg`` and ``knn`` are registered on the
default registry; further backends register a factory under a new name.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from typing import Any

import cardiomech.classify.knn as _knn
import cardiomech.classify.logreg as _logreg
import cardiomech.types as _types
from cardiomech.errors import ConfigError

_LOGGER = logging.getLogger(__name__)

ClassifierFactory = Callable[[Mapping[str, float | int]], _types.Classifier]
ClassifierLoader = Callable[[Mapping[str, Any]], _types.Classifier]


def _load_logreg(model: Mapping[str, Any]) -> _types.Classifier:
    clf = _logreg.LogRegClassifier()
    clf.model = _logreg.LogRegModel.from_dict(model)
    clf.hyper = clf.model.hyper
    return clf


class ClassifierRegistry:
    """Registry of classifier factories keyed by name."""

    def __init__(self) -> None:
        """Create an empty registry.

        :returns: None
        """
        self._factories: dict[str, ClassifierFactory] = {}
        self._loaders: dict[str, ClassifierLoader] = {}

    def register(
        self,
        name: str,
        factory: ClassifierFactory,
        loader: ClassifierLoader | None = None,
        *,
        replace: bool = False,
    ) -> None:
        """Register a classifier backend.

        :param name: Name used in ClassifierSpec.
        :param factory: Callable building an untrained classifier from params.
        :param loader: Optional callable restoring a trained classifier from
            the ``model`` part of its serialized form.
        :param replace: Allow overriding an existing name.
        :returns: None
        :raises ConfigError: If the name is taken and replace is False.
        """
        if name in self._factories and not replace:
            raise ConfigError(f"classifier {name!r} is already registered")
        self._factories[name] = factory
        if loader is not None:
            self._loaders[name] = loader
        _LOGGER.debug("registered classifier %s", name)

    def list_classifiers(self) -> list[str]:
        """Return the registered names in sorted order."""
        return sorted(self._factories)

    def create(self, spec: _types.ClassifierSpec) -> _types.Classifier:
        """Build an untrained classifier.

        :param spec: Name and hyperparameters.
        :returns: Classifier instance.
        :raises ConfigError: If the name is unknown.
        """
        try:
            factory = self._factories[spec.name]
        except KeyError:
            raise ConfigError(
                f"unknown classifier {spec.name!r}; "
                f"available: {', '.join(self.list_classifiers())}"
            ) from None
        return factory(spec.params)

    def restore(self, data: Mapping[str, Any]) -> _types.Classifier:
        """Rebuild a trained classifier from :meth:`Classifier.to_dict` output.

        :param data: Mapping with ``name`` and ``model``.
        :returns: Trained classifier.
        :raises ConfigError: If the document is malformed or has no loader.
        """
        _types.check_keys(data, ("name", "model", "class_set", "features"), "model")
        name = str(data.get("name", ""))
        if name not in self._loaders:
            raise ConfigError(f"no loader for classifier {name!r}")
        if "model" not in data:
            raise ConfigError("model document has no 'model' entry")
        return self._loaders[name](data["model"])


default_registry = ClassifierRegistry()
default_registry.register("logreg", _logreg.LogRegClassifier, _load_logreg)
default_registry.register("knn", _knn.KNNClassifier, _knn.KNNClassifier.from_model)

__all__ = [
    "ClassifierFactory",
    "ClassifierLoader",
    "ClassifierRegistry",
    "default_registry",
]

