"""CardioMech public API.

Regularized cardiac image registration, label propagation, Neo-Hookean
biomechanics and the feature selection and classification built on them.
"""

from __future__ import annotations

import logging

import cardiomech.config as _config
import cardiomech.errors as _errors
import cardiomech.event as _event
import cardiomech.features as _features
import cardiomech.formats as _formats
import cardiomech.phantom as _phantom
import cardiomech.pipeline as _pipeline
import cardiomech.propagation as _propagation
import cardiomech.registration as _registration
import cardiomech.registry as _registry
import cardiomech.selection as _selection
import cardiomech.types as _types

# Set up logging for the library
logging.getLogger(__name__).addHandler(logging.NullHandler())

# Re-export types for public API
CineSequence = _types.CineSequence
ClassifierSpec = _types.ClassifierSpec
CVSpec = _types.CVSpec
Dataset = _types.Dataset
DisplacementField3 = _types.DisplacementField3
FeatureVector = _types.FeatureVector
Grid = _types.Grid
LabelMap3 = _types.LabelMap3
MaterialParams = _types.MaterialParams
RegConfig = _types.RegConfig
RegResult = _types.RegResult
SelectionResult = _types.SelectionResult
SimConfig = _types.SimConfig
Stage = _types.Stage
Volume3 = _types.Volume3
PipelineConfig = _config.PipelineConfig
CaseData = _formats.CaseData
PhantomParams = _phantom.PhantomParams

# Re-export errors and events
CardioMechError = _errors.CardioMechError
NumericalError = _errors.NumericalError
ValidationError = _errors.ValidationError
CaseProcessed = _event.CaseProcessed
PipelineEvent = _event.PipelineEvent
SelectionStepRecorded = _event.SelectionStepRecorded
StageCompleted = _event.StageCompleted

# Entry points of the pipeline
register = _registration.register
multi_frame_segment = _propagation.multi_frame_segment
extract_features = _features.extract_features
select_features = _selection.select_features
generate_case = _phantom.generate_case
generate_cohort = _phantom.generate_cohort
process_case = _pipeline.process_case
process_cohort = _pipeline.process_cohort
classify_cohort = _pipeline.classify_cohort
read_case = _formats.read_case
write_case = _formats.write_case
load_config = _config.load_config


def list_classifiers() -> list[str]:
    """Return the classifier names known to the default registry.

    >>> list_classifiers()
    ['knn', 'logreg']

    :returns: Sorted names.
    """
    return _registry.default_registry.list_classifiers()


__all__ = [
    "CVSpec",
    "CardioMechError",
    "CaseData",
    "CaseProcessed",
    "CineSequence",
    "ClassifierSpec",
    "Dataset",
    "DisplacementField3",
    "FeatureVector",
    "Grid",
    "LabelMap3",
    "MaterialParams",
    "NumericalError",
    "PhantomParams",
    "PipelineConfig",
    "PipelineEvent",
    "RegConfig",
    "RegResult",
    "SelectionResult",
    "SelectionStepRecorded",
    "SimConfig",
    "Stage",
    "StageCompleted",
    "ValidationError",
    "Volume3",
    "classify_cohort",
    "extract_features",
    "generate_case",
    "generate_cohort",
    "list_classifiers",
    "load_config",
    "multi_frame_segment",
    "process_case",
    "process_cohort",
    "read_case",
    "register",
    "select_features",
    "write_case",
]
