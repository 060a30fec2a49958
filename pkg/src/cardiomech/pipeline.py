"""Case-to-class pipeline.

A case goes through phase fields at ED and ES, Neo-Hookean energy maps,
local moduli and displacement magnitudes to its feature vector. A cohort of
feature vectors then goes through feature selection and cross-validated
classification.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

import cardiomech.biomech as _biomech
import cardiomech.config as _config
import cardiomech.evaluation as _evaluation
import cardiomech.event as _event
import cardiomech.features as _features
import cardiomech.formats as _formats
import cardiomech.selection as _selection
import cardiomech.types as _types

_LOGGER = logging.getLogger(__name__)


def phase_maps(
    seq: _types.CineSequence,
    phase: _types.Phase,
    cfg: _config.PipelineConfig,
) -> _features.PhaseMaps:
    """Compute the maps of one phase used for feature extraction.

    :param seq: Cine sequence.
    :param phase: ``ed`` or ``es``.
    :param cfg: Pipeline settings.
    :returns: Moduli, displacement magnitude and labels of the phase.
    """
    reg = cfg.registration
    field = _biomech.phase_field(seq, phase, reg)
    moduli = _biomech.local_moduli(
        field, reg.material, cfg.moduli_window, cfg.energy_floor
    )
    return _features.PhaseMaps(
        mu_map=moduli.mu_map,
        kappa_map=moduli.kappa_map,
        phimag=_features.field_magnitude(field),
        labels=seq.phase_labels(phase),
    )


def process_case(
    case: _formats.CaseData, cfg: _config.PipelineConfig | None = None
) -> _types.FeatureVector:
    """Extract the feature vector of one case.

    :param case: Case with frames and ED/ES labels.
    :param cfg: Pipeline settings; defaults when None.
    :returns: The 312-feature vector.
    :raises ValidationError: On invalid inputs or missing labels.
    :raises NumericalError: If a registration diverges.
    """
    cfg = cfg or _config.PipelineConfig()
    _LOGGER.info("processing case %s", case.case_id)
    ed = phase_maps(case.sequence, "ed", cfg)
    es = phase_maps(case.sequence, "es", cfg)
    return _features.extract_features(case.case_id, case.class_label or "", ed, es)


def process_cohort(
    cases: Sequence[_formats.CaseData],
    cfg: _config.PipelineConfig | None = None,
    *,
    on_event: _event.EventCallback | None = None,
) -> _types.Dataset:
    """Extract the features of every case with a thread pool.

    :param cases: Labelled cases.
    :param cfg: Pipeline settings; ``max_workers`` sizes the pool.
    :param on_event: Optional callback receiving one CaseProcessed per case.
    :returns: Dataset in input order.
    :raises ValidationError: On invalid inputs or unlabelled cases.
    :raises NumericalError: If a registration diverges.
    """
    cfg = cfg or _config.PipelineConfig()
    vectors: list[_types.FeatureVector | None] = [None] * len(cases)
    done = 0
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        futures = {pool.submit(process_case, c, cfg): i for i, c in enumerate(cases)}
        for fut in as_completed(futures):
            i = futures[fut]
            vectors[i] = fut.result()
            done += 1
            _LOGGER.info("case %s done (%d/%d)", cases[i].case_id, done, len(cases))
            _event.safe_emit(
                on_event,
                _event.CaseProcessed(
                    case_id=cases[i].case_id, index=done, total=len(cases)
                ),
            )
    return _types.Dataset.from_feature_vectors([v for v in vectors if v is not None])


@dataclass(frozen=True, eq=False)
class CohortReport:
    """Selection and cross-validated classification of a cohort.

    :param selection: Feature selection result.
    :param accuracy: Cross-validated accuracy on the selected features.
    :param predictions: Out-of-fold predicted class per case.
    :param confusion: Confusion matrix, truth rows and predicted columns.
    :param class_set: Row and column order of ``confusion``.
    """

    selection: _types.SelectionResult
    accuracy: float
    predictions: tuple[str, ...]
    confusion: NDArray[np.int64]
    class_set: tuple[str, ...]


def classify_cohort(
    dataset: _types.Dataset,
    cfg: _config.PipelineConfig | None = None,
    *,
    on_event: _event.EventCallback | None = None,
) -> CohortReport:
    """Select features, then classify out of fold with the selected set.

    :param dataset: Cohort features.
    :param cfg: Pipeline settings.
    :param on_event: Optional callback receiving selection steps.
    :returns: Report with selection, accuracy and confusion matrix.
    :raises ValidationError: If a class has fewer members than folds.
    """
    cfg = cfg or _config.PipelineConfig()
    result = _selection.select_features(
        dataset, cfg.classifier, cfg.cv, cfg.seed, on_event=on_event
    )
    reduced = dataset.select_features(result.selected)
    pred = _evaluation.cross_val_predict(reduced, cfg.classifier, cfg.cv, cfg.seed)
    names = tuple(dataset.class_set[int(i)] for i in pred)
    accuracy = float(np.mean(pred == dataset.y))
    _LOGGER.info(
        "cohort of %d case(s): %d feature(s) selected, accuracy %.4f",
        dataset.n_cases,
        len(result.selected),
        accuracy,
    )
    return CohortReport(
        selection=result,
        accuracy=accuracy,
        predictions=names,
        confusion=_evaluation.confusion_matrix(
            dataset.labels, names, dataset.class_set
        ),
        class_set=dataset.class_set,
    )


__all__ = [
    "CohortReport",
    "classify_cohort",
    "phase_maps",
    "process_case",
    "process_cohort",
]
