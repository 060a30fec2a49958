"""Pipeline configuration document.

The JSON document embeds the registration settings together with the
windows, the classifier and the cross-validation protocol. Unknown keys are
rejected at every level and serialization writes every default explicitly.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, cast

import cardiomech.biomech as _biomech
import cardiomech.formats as _formats
import cardiomech.types as _types
from cardiomech.errors import ConfigError, ValidationError

_LOGGER = logging.getLogger(__name__)

_KEYS = (
    "registration",
    "moduli_window",
    "energy_floor",
    "lwv_window",
    "n_adjacent",
    "classifier",
    "cv",
    "seed",
    "max_workers",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of the full case-to-class pipeline.

    :param registration: Registration settings.
    :param moduli_window: Odd window of the local moduli means.
    :param energy_floor: Minimum energy density for a valid modulus.
    :param lwv_window: Odd correlation window of label fusion.
    :param n_adjacent: Neighbour frames used for multi-frame segmentation.
    :param classifier: Classifier name and hyperparameters.
    :param cv: Cross-validation protocol.
    :param seed: Seed of folds and subsampling.
    :param max_workers: Thread pool size; None lets the executor decide.
    """

    registration: _types.RegConfig = field(default_factory=_types.RegConfig)
    moduli_window: int = 5
    energy_floor: float = _biomech.DEFAULT_ENERGY_FLOOR
    lwv_window: int = 5
    n_adjacent: int = 2
    classifier: _types.ClassifierSpec = field(default_factory=_types.ClassifierSpec)
    cv: _types.CVSpec = field(default_factory=_types.CVSpec)
    seed: int = 0
    max_workers: int | None = None

    def __post_init__(self) -> None:
        """Validate ranges.

        :raises ValidationError: On invalid values.
        """
        for name in ("moduli_window", "lwv_window"):
            value = int(getattr(self, name))
            if value < 3 or value % 2 == 0:  # noqa: PLR2004
                raise ValidationError(f"{name} must be odd and >= 3, got {value}")
        if self.energy_floor <= 0:
            raise ValidationError("energy_floor must be positive")
        if self.n_adjacent < 0:
            raise ValidationError("n_adjacent must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")
        if self.max_workers is not None and self.max_workers < 1:
            raise ValidationError("max_workers must be >= 1")

    def with_seed(self, seed: int) -> PipelineConfig:
        """Return a copy with ``seed`` applied to the pipeline and registration.

        :param seed: New seed.
        :returns: Updated config.
        """
        reg = replace(self.registration, seed=seed)
        return replace(self, seed=seed, registration=reg)

    def to_dict(self) -> dict[str, Any]:
        """Serialize with every default written explicitly."""
        return {
            "registration": self.registration.to_dict(),
            "moduli_window": self.moduli_window,
            "energy_floor": self.energy_floor,
            "lwv_window": self.lwv_window,
            "n_adjacent": self.n_adjacent,
            "classifier": self.classifier.to_dict(),
            "cv": self.cv.to_dict(),
            "seed": self.seed,
            "max_workers": self.max_workers,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineConfig:
        """Decode from :meth:`to_dict` output; absent keys take defaults.

        :param data: Mapping decoded from JSON.
        :returns: Pipeline config.
        :raises ConfigError: On unknown keys or values of the wrong type.
        :raises ValidationError: On out-of-range values.
        """
        _types.check_keys(data, _KEYS, "pipeline")
        d = cls()
        try:
            workers = data.get("max_workers", d.max_workers)
            return cls(
                registration=_types.RegConfig.from_dict(data.get("registration", {})),
                moduli_window=int(data.get("moduli_window", d.moduli_window)),
                energy_floor=float(data.get("energy_floor", d.energy_floor)),
                lwv_window=int(data.get("lwv_window", d.lwv_window)),
                n_adjacent=int(data.get("n_adjacent", d.n_adjacent)),
                classifier=_types.ClassifierSpec.from_dict(data.get("classifier", {})),
                cv=_types.CVSpec.from_dict(data.get("cv", {})),
                seed=int(data.get("seed", d.seed)),
                max_workers=None if workers is None else int(workers),
            )
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed pipeline config: {exc}") from None


def dump_config(cfg: PipelineConfig) -> str:
    """Render a config as JSON text with sorted keys.

    >>> '"lambda": 0.1' in dump_config(PipelineConfig())
    True

    :param cfg: Config to render.
    :returns: JSON text.
    """
    return _formats.dumps_json(cfg.to_dict())


def load_config(path: Path | str | None) -> PipelineConfig:
    """Load a config file; None yields the defaults.

    :param path: JSON file or None.
    :returns: Pipeline config.
    :raises ConfigError: On invalid JSON or unknown keys.
    """
    if path is None:
        return PipelineConfig()
    data = _formats.read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: pipeline config must be a JSON object")
    cfg = PipelineConfig.from_dict(cast("dict[str, Any]", data))
    _LOGGER.debug("loaded config from %s", path)
    return cfg


def save_config(path: Path | str, cfg: PipelineConfig) -> None:
    """Write a config file.

    :param path: Destination.
    :param cfg: Config to write.
    :returns: None
    """
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


__all__ = ["PipelineConfig", "dump_config", "load_config", "save_config"]
