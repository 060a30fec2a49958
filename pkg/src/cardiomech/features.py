"""Per-case feature vectors from moduli, motion and label maps.

Feature names follow ``value_label_stat_phase``:

* ``value`` is one of ``mu``, ``kappa``, ``phimag`` (displacement magnitude)
  or ``vol``;
* ``label`` is a single label ``1``..``6``, a pair ``a_b`` or ``a_total``;
* ``stat`` is ``mean``, ``std``, ``p10``, ``p90``, ``ml`` or ``ratio``;
* ``phase`` is ``ED``, ``ES`` or ``EDoverES``.

The canonical enumeration has 312 entries: region statistics (144), label
volumes (12), ED/ES ratios (24), label pair ratios (120) and label fractions of
the total labelled volume (12).

>>> len(feature_names())
312
>>> parse_feature_name("mu_1_2_ratio_ED")
FeatureName(value='mu', label='1_2', stat='ratio', phase='ED')
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cache

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

MAP_VALUES: tuple[str, ...] = ("mu", "kappa", "phimag")
RATIO_VALUES: tuple[str, ...] = (*MAP_VALUES, "vol")
STATS: tuple[str, ...] = ("mean", "std", "p10", "p90")
PHASES: tuple[str, ...] = ("ED", "ES")
PHASE_RATIO = "EDoverES"
LABELS: tuple[int, ...] = _types.FOREGROUND_LABELS
LABEL_PAIRS: tuple[tuple[int, int], ...] = tuple(itertools.combinations(LABELS, 2))
DIVISION_GUARD = 1e-9
FEATURE_COUNT = 312

RV_PROXIMITY_VOXELS = 2.0
SHELL_VOXELS = 3.0


@dataclass(frozen=True)
class FeatureName:
    """Components of a feature name.

    :param value: Measured quantity.
    :param label: Label, label pair or label fraction spec.
    :param stat: Statistic.
    :param phase: Phase or phase ratio.
    """

    value: str
    label: str
    stat: str
    phase: str

    def render(self) -> str:
        """Return the canonical ``value_label_stat_phase`` string."""
        return f"{self.value}_{self.label}_{self.stat}_{self.phase}"


def parse_feature_name(name: str) -> FeatureName:
    """Split a feature name into its components.

    :param name: Feature name.
    :returns: Parsed components.
    :raises ValidationError: If the name does not follow the grammar.
    """
    parts = name.split("_")
    if len(parts) < 4:  # noqa: PLR2004
        raise ValidationError(f"malformed feature name {name!r}")
    parsed = FeatureName(parts[0], "_".join(parts[1:-2]), parts[-2], parts[-1])
    if parsed.value not in RATIO_VALUES or parsed.phase not in (*PHASES, PHASE_RATIO):
        raise ValidationError(f"malformed feature name {name!r}")
    if parsed.stat not in (*STATS, "ml", "ratio"):
        raise ValidationError(f"malformed feature name {name!r}")
    return parsed


@cache
def feature_names() -> tuple[str, ...]:
    """Return the 312 feature names in canonical order."""
    names: list[str] = []
    for value in MAP_VALUES:
        for label in LABELS:
            for stat in STATS:
                names.extend(f"{value}_{label}_{stat}_{ph}" for ph in PHASES)
    for label in LABELS:
        names.extend(f"vol_{label}_ml_{ph}" for ph in PHASES)
    for value in RATIO_VALUES:
        names.extend(f"{value}_{label}_ratio_{PHASE_RATIO}" for label in LABELS)
    for value in RATIO_VALUES:
        for a, b in LABEL_PAIRS:
            names.extend(f"{value}_{a}_{b}_ratio_{ph}" for ph in PHASES)
    for label in LABELS:
        names.extend(f"vol_{label}_total_ratio_{ph}" for ph in PHASES)
    return tuple(names)


def region_stats(
    values: _types.Volume3, labels: _types.LabelMap3, label: int
) -> tuple[float, float, float, float]:
    """Mean, population std, 10th and 90th percentile inside one label.

    Percentiles interpolate linearly between closest ranks.

    :param values: Scalar map.
    :param labels: Label map on the same grid.
    :param label: Region label.
    :returns: ``(mean, std, p10, p90)``.
    :raises ValidationError: If the label is absent.
    :raises GridMismatchError: If the grids differ.
    """
    values.grid.require_same(labels.grid, "map and labels")
    region = np.asarray(values.data, np.float64)[labels.data == label]
    if region.size == 0:
        raise ValidationError(f"label {label} is absent from the label map")
    p10, p90 = np.percentile(region, [10.0, 90.0], method="linear")
    return float(region.mean()), float(region.std()), float(p10), float(p90)


def field_magnitude(field: _types.DisplacementField3) -> _types.Volume3:
    """Per-voxel Euclidean norm of a displacement field in mm.

    :param field: Displacement field.
    :returns: Magnitude map.
    """
    return _types.Volume3(
        field.grid, np.linalg.norm(np.asarray(field.data, np.float64), axis=-1)
    )


def label_volume(labels: _types.LabelMap3, label: int) -> float:
    """Volume of one label in ml.

    :param labels: Label map.
    :param label: Label to measure.
    :returns: Volume in ml; 0 for an absent label.
    """
    count = int(np.count_nonzero(labels.data == label))
    return count * labels.grid.voxel_volume_mm3 / 1000.0


@dataclass(frozen=True, eq=False)
class PhaseMaps:
    """Maps of one phase used for feature extraction.

    :param mu_map: Local shear modulus.
    :param kappa_map: Local bulk modulus.
    :param phimag: Displacement magnitude.
    :param labels: Six-label map of the phase.
    """

    mu_map: _types.Volume3
    kappa_map: _types.Volume3
    phimag: _types.Volume3
    labels: _types.LabelMap3

    def value_map(self, value: str) -> _types.Volume3:
        """Return the map of a value token.

        :param value: ``mu``, ``kappa`` or ``phimag``.
        :returns: The map.
        """
        return {"mu": self.mu_map, "kappa": self.kappa_map, "phimag": self.phimag}[
            value
        ]


class _Guard:
    """Guarded division collecting warning records."""

    def __init__(self, case_id: str) -> None:
        self.case_id = case_id
        self.warnings: list[str] = []

    def divide(self, name: str, num: float, den: float) -> float:
        if abs(den) < DIVISION_GUARD:
            msg = f"{name}: denominator {den:.3g} below {DIVISION_GUARD:g}"
            _LOGGER.warning("case %s: %s", self.case_id, msg)
            self.warnings.append(msg)
            return 0.0
        return num / den


def extract_features(
    case_id: str,
    class_label: str,
    ed: PhaseMaps,
    es: PhaseMaps,
) -> _types.FeatureVector:
    """Assemble the canonical 312-feature vector of one case.

    :param case_id: Case identifier.
    :param class_label: Diagnostic category.
    :param ed: End-diastolic maps.
    :param es: End-systolic maps.
    :returns: The feature vector, with warning records of guarded divisions.
    :raises ValidationError: If a label is missing at either phase.
    :raises GridMismatchError: If maps live on different grids.
    """
    phases = {"ED": ed, "ES": es}
    guard = _Guard(case_id)
    values: dict[str, float] = {}
    means: dict[tuple[str, int, str], float] = {}

    for value in MAP_VALUES:
        for label in LABELS:
            stats = {
                ph: region_stats(maps.value_map(value), maps.labels, label)
                for ph, maps in phases.items()
            }
            for i, stat in enumerate(STATS):
                for ph in PHASES:
                    values[f"{value}_{label}_{stat}_{ph}"] = stats[ph][i]
            for ph in PHASES:
                means[(value, label, ph)] = stats[ph][0]
    for label in LABELS:
        for ph, maps in phases.items():
            ml = label_volume(maps.labels, label)
            values[f"vol_{label}_ml_{ph}"] = ml
            means[("vol", label, ph)] = ml
    for value in RATIO_VALUES:
        for label in LABELS:
            name = f"{value}_{label}_ratio_{PHASE_RATIO}"
            values[name] = guard.divide(
                name, means[(value, label, "ED")], means[(value, label, "ES")]
            )
    for value in RATIO_VALUES:
        for a, b in LABEL_PAIRS:
            for ph in PHASES:
                name = f"{value}_{a}_{b}_ratio_{ph}"
                values[name] = guard.divide(
                    name, means[(value, a, ph)], means[(value, b, ph)]
                )
    totals = {ph: sum(means[("vol", label, ph)] for label in LABELS) for ph in PHASES}
    for label in LABELS:
        for ph in PHASES:
            name = f"vol_{label}_total_ratio_{ph}"
            values[name] = guard.divide(name, means[("vol", label, ph)], totals[ph])

    ordered = tuple((name, values[name]) for name in feature_names())
    return _types.FeatureVector(
        case_id=_types.CaseID(case_id),
        class_label=class_label,
        values=ordered,
        warnings=tuple(guard.warnings),
    )


def _as_mask(m: _types.LabelMap3, name: str) -> NDArray[np.bool_]:
    mask = m.data > 0
    if not mask.any():
        raise ValidationError(f"{name} mask is empty")
    return mask


def split_acdc_labels(
    lv_cavity: _types.LabelMap3,
    myocardium: _types.LabelMap3,
    rv_cavity: _types.LabelMap3,
) -> _types.LabelMap3:
    """Derive the six-label map from three segmentation masks.

    * 3 is the LV cavity and 5 the RV cavity.
    * The myocardium is split by the sagittal (constant-x) plane through the
      LV cavity centroid. The half facing the RV cavity becomes 1 and the
      rest, plane included, becomes 2.
    * Myocardium within 2 voxels of the RV cavity becomes 4.
    * The 3-voxel shell around the union of all masks becomes 6.

    :param lv_cavity: LV cavity mask (nonzero voxels).
    :param myocardium: Myocardium mask.
    :param rv_cavity: RV cavity mask.
    :returns: Six-label map.
    :raises ValidationError: If a mask is empty or masks overlap.
    :raises GridMismatchError: If masks live on different grids.
    """
    grid = lv_cavity.grid
    grid.require_same(myocardium.grid, "LV cavity and myocardium masks")
    grid.require_same(rv_cavity.grid, "LV cavity and RV cavity masks")
    lv = _as_mask(lv_cavity, "LV cavity")
    myo = _as_mask(myocardium, "myocardium")
    rv = _as_mask(rv_cavity, "RV cavity")
    if (lv & myo).any() or (lv & rv).any() or (myo & rv).any():
        raise ValidationError("LV cavity, myocardium and RV cavity masks overlap")

    x = grid.physical_points()[..., 0]
    cx = float(x[lv].mean())
    toward_rv = 1.0 if float(x[rv].mean()) >= cx else -1.0
    out = np.zeros(grid.dims, dtype=np.uint8)
    out[lv] = 3
    out[rv] = 5
    out[myo] = 2
    out[myo & ((x - cx) * toward_rv > 0.0)] = 1
    near_rv = ndimage.distance_transform_edt(~rv) <= RV_PROXIMITY_VOXELS
    out[myo & near_rv] = 4
    union = lv | myo | rv
    shell = (ndimage.distance_transform_edt(~union) <= SHELL_VOXELS) & ~union
    out[shell] = 6
    return _types.LabelMap3(grid, out)


def split_acdc_segmentation(segmentation: _types.LabelMap3) -> _types.LabelMap3:
    """Derive the six-label map from a 3-class segmentation.

    The segmentation uses 1 for the RV cavity, 2 for the myocardium and 3 for
    the LV cavity.

    :param segmentation: 3-class segmentation.
    :returns: Six-label map.
    :raises ValidationError: If a class is missing.
    """
    grid = segmentation.grid
    seg = segmentation.data
    return split_acdc_labels(
        _types.LabelMap3(grid, (seg == 3).astype(np.uint8)),  # noqa: PLR2004
        _types.LabelMap3(grid, (seg == 2).astype(np.uint8)),  # noqa: PLR2004
        _types.LabelMap3(grid, (seg == 1).astype(np.uint8)),
    )


__all__ = [
    "FEATURE_COUNT",
    "LABEL_PAIRS",
    "FeatureName",
    "PhaseMaps",
    "extract_features",
    "feature_names",
    "field_magnitude",
    "label_volume",
    "parse_feature_name",
    "region_stats",
    "split_acdc_labels",
    "split_acdc_segmentation",
]
