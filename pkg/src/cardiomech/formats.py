"""File formats: volume files, case directories, CSV tables and JSON.

A volume file is a UTF-8 text header of ``Key = Value`` lines followed by a
raw little-endian payload. The payload stores the x index fastest, then y,
then z, with vector components interleaved per voxel. ``DataOffsetBytes`` is
the header length, so the payload starts right after it.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import NDArray

import cardiomech.evaluation as _evaluation
import cardiomech.phantom as _phantom
import cardiomech.selection as _selection
import cardiomech.types as _types
from cardiomech.errors import (
    ConfigError,
    HeaderError,
    TruncatedPayloadError,
    UnknownElementTypeError,
    ValidationError,
)

_LOGGER = logging.getLogger(__name__)

VolumeLike = _types.Volume3 | _types.DisplacementField3 | _types.LabelMap3

_HEADER_KEYS = (
    "ObjectType",
    "NDims",
    "DimSize",
    "ElementSpacing",
    "Offset",
    "ElementType",
    "Channels",
    "DataOffsetBytes",
)
_ELEMENT_TYPES: dict[str, np.dtype[Any]] = {
    "FLOAT32": np.dtype("<f4"),
    "UINT8": np.dtype("u1"),
}
# ObjectType -> (ElementType, Channels)
_OBJECT_TYPES: dict[str, tuple[str, int]] = {
    "Image": ("FLOAT32", 1),
    "VectorField": ("FLOAT32", 3),
    "LabelMap": ("UINT8", 1),
}
_MAX_HEADER_BYTES = 4096

MANIFEST_NAME = "manifest.json"
CASE_COLUMN = "case_id"
CLASS_COLUMN = "class"


def _format_floats(values: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def _object_type(vol: VolumeLike) -> str:
    if isinstance(vol, _types.DisplacementField3):
        return "VectorField"
    if isinstance(vol, _types.LabelMap3):
        return "LabelMap"
    return "Image"


def encode_volume(vol: VolumeLike) -> bytes:
    """Serialize a container to the volume file layout.

    :param vol: Volume, displacement field or label map.
    :returns: Header and payload bytes.
    """
    kind = _object_type(vol)
    element, channels = _OBJECT_TYPES[kind]
    grid = vol.grid
    lines = [
        f"ObjectType = {kind}",
        "NDims = 3",
        "DimSize = " + " ".join(str(n) for n in grid.dims),
        f"ElementSpacing = {_format_floats(grid.spacing)}",
        f"Offset = {_format_floats(grid.origin)}",
        f"ElementType = {element}",
        f"Channels = {channels}",
    ]
    body = "".join(line + "\n" for line in lines)
    offset = len(body.encode("utf-8"))
    while True:
        header = f"{body}DataOffsetBytes = {offset}\n".encode()
        if len(header) == offset:
            break
        offset = len(header)
    data = np.asarray(vol.data, dtype=_ELEMENT_TYPES[element])
    if channels == 1:
        data = data[..., None]
    payload = np.ascontiguousarray(data.transpose(2, 1, 0, 3)).tobytes()
    return header + payload


def _parse_header(raw: bytes) -> tuple[dict[str, str], int]:
    fields_: dict[str, str] = {}
    pos = 0
    while "DataOffsetBytes" not in fields_:
        end = raw.find(b"\n", pos)
        if end < 0 or end > _MAX_HEADER_BYTES:
            raise HeaderError("volume header is not terminated by DataOffsetBytes")
        try:
            line = raw[pos:end].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HeaderError(f"volume header is not UTF-8: {exc}") from None
        pos = end + 1
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _HEADER_KEYS:
            raise HeaderError(f"malformed header line {line!r}")
        if key in fields_:
            raise HeaderError(f"duplicate header key {key}")
        fields_[key] = value.strip()
    missing = [k for k in _HEADER_KEYS if k not in fields_]
    if missing:
        raise HeaderError(f"volume header misses {', '.join(missing)}")
    return fields_, pos


def _ints(text: str, key: str, count: int) -> list[int]:
    try:
        values = [int(v) for v in text.split()]
    except ValueError:
        raise HeaderError(f"{key} must hold integers, got {text!r}") from None
    if len(values) != count:
        raise HeaderError(f"{key} must hold {count} value(s), got {text!r}")
    return values


def _floats(text: str, key: str) -> tuple[float, float, float]:
    try:
        values = [float(v) for v in text.split()]
    except ValueError:
        raise HeaderError(f"{key} must hold numbers, got {text!r}") from None
    if len(values) != 3 or not all(math.isfinite(v) for v in values):  # noqa: PLR2004
        raise HeaderError(f"{key} must hold 3 finite numbers, got {text!r}")
    return values[0], values[1], values[2]


def decode_volume(raw: bytes) -> VolumeLike:
    """Parse volume file bytes.

    :param raw: File content.
    :returns: Volume3, DisplacementField3 or LabelMap3 by ObjectType.
    :raises HeaderError: On malformed headers or schema violations.
    :raises UnknownElementTypeError: On an unsupported ElementType.
    :raises TruncatedPayloadError: If the payload size disagrees with the header.
    """
    hdr, header_len = _parse_header(raw)
    element = hdr["ElementType"]
    if element not in _ELEMENT_TYPES:
        raise UnknownElementTypeError(f"unsupported ElementType {element!r}")
    kind = hdr["ObjectType"]
    if kind not in _OBJECT_TYPES:
        raise HeaderError(f"unknown ObjectType {kind!r}")
    if _ints(hdr["NDims"], "NDims", 1) != [3]:
        raise HeaderError(f"NDims must be 3, got {hdr['NDims']}")
    channels = _ints(hdr["Channels"], "Channels", 1)[0]
    if (element, channels) != _OBJECT_TYPES[kind]:
        raise HeaderError(
            f"ObjectType {kind} requires ElementType {_OBJECT_TYPES[kind][0]} and "
            f"Channels {_OBJECT_TYPES[kind][1]}, got {element} and {channels}"
        )
    offset = _ints(hdr["DataOffsetBytes"], "DataOffsetBytes", 1)[0]
    if offset != header_len:
        raise HeaderError(
            f"DataOffsetBytes {offset} disagrees with the header length {header_len}"
        )
    nx, ny, nz = _ints(hdr["DimSize"], "DimSize", 3)
    grid = _types.Grid(
        (nx, ny, nz),
        _floats(hdr["ElementSpacing"], "ElementSpacing"),
        _floats(hdr["Offset"], "Offset"),
    )
    dtype = _ELEMENT_TYPES[element]
    expected = grid.size * channels * dtype.itemsize
    actual = len(raw) - offset
    if actual != expected:
        raise TruncatedPayloadError(expected, actual)
    flat = np.frombuffer(raw, dtype=dtype, offset=offset)
    data = flat.reshape(nz, ny, nx, channels).transpose(2, 1, 0, 3)
    if kind == "VectorField":
        return _types.DisplacementField3(grid, data)
    if kind == "LabelMap":
        return _types.LabelMap3(grid, data[..., 0])
    return _types.Volume3(grid, data[..., 0])


def write_volume(path: Path | str, vol: VolumeLike) -> None:
    """Write a container to a volume file.

    :param path: Destination.
    :param vol: Volume, displacement field or label map.
    :returns: None
    """
    Path(path).write_bytes(encode_volume(vol))
    _LOGGER.debug("wrote %s", path)


def read_volume(path: Path | str) -> VolumeLike:
    """Read a volume file.

    :param path: Source file.
    :returns: Volume3, DisplacementField3 or LabelMap3 by ObjectType.
    :raises VolumeFormatError: On malformed content.
    """
    return decode_volume(Path(path).read_bytes())


def read_image(path: Path | str) -> _types.Volume3:
    """Read a scalar image file.

    :param path: Source file.
    :returns: The volume.
    :raises HeaderError: If the file holds another ObjectType.
    """
    vol = read_volume(path)
    if not isinstance(vol, _types.Volume3):
        raise HeaderError(f"{path}: expected an Image, found {_object_type(vol)}")
    return vol


def read_field(path: Path | str) -> _types.DisplacementField3:
    """Read a displacement field file.

    :param path: Source file.
    :returns: The field.
    :raises HeaderError: If the file holds another ObjectType.
    """
    vol = read_volume(path)
    if not isinstance(vol, _types.DisplacementField3):
        raise HeaderError(f"{path}: expected a VectorField, found {_object_type(vol)}")
    return vol


def read_labels(path: Path | str) -> _types.LabelMap3:
    """Read a label map file.

    :param path: Source file.
    :returns: The label map.
    :raises HeaderError: If the file holds another ObjectType.
    """
    vol = read_volume(path)
    if not isinstance(vol, _types.LabelMap3):
        raise HeaderError(f"{path}: expected a LabelMap, found {_object_type(vol)}")
    return vol


def dumps_json(data: Any) -> str:
    """Render JSON with sorted keys and two-space indentation."""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_json(path: Path | str, data: Any) -> None:
    """Write a JSON document.

    :param path: Destination.
    :param data: JSON-compatible value.
    :returns: None
    """
    Path(path).write_text(dumps_json(data), encoding="utf-8")


def read_json(path: Path | str) -> Any:
    """Read a JSON document.

    :param path: Source file.
    :returns: Decoded value.
    :raises ConfigError: If the file is not valid JSON.
    """
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


@dataclass(frozen=True, eq=False)
class CaseData:
    """Contents of a case directory.

    :param case_id: Identifier.
    :param class_label: Class, or None when unknown.
    :param sequence: Cine frames with ED and ES labels.
    :param metadata: Free-form JSON metadata, e.g. phantom parameters.
    """

    case_id: str
    class_label: str | None
    sequence: _types.CineSequence
    metadata: Mapping[str, Any] = field(default_factory=lambda: dict[str, Any]())


def case_from_phantom(case: _phantom.PhantomCase) -> CaseData:
    """Wrap a phantom case for writing.

    :param case: Generated phantom case.
    :returns: Case data carrying the phantom parameters and seed.
    """
    return CaseData(
        case_id=case.case_id,
        class_label=case.class_label,
        sequence=case.sequence,
        metadata={"phantom": case.params.to_dict(), "seed": case.seed},
    )


def write_case(case_dir: Path | str, case: CaseData) -> Path:
    """Write a case directory.

    The directory holds one volume file per frame, the ED and ES label maps and
    ``manifest.json``.

    :param case_dir: Directory to create or fill.
    :param case: Case contents.
    :returns: The directory path.
    """
    root = Path(case_dir)
    root.mkdir(parents=True, exist_ok=True)
    seq = case.sequence
    frame_files = [f"frame_{i:03d}.vol" for i in range(len(seq.frames))]
    for name, frame in zip(frame_files, seq.frames, strict=True):
        write_volume(root / name, frame)
    write_volume(root / "labels_ed.vol", seq.labels_ed)
    write_volume(root / "labels_es.vol", seq.labels_es)
    manifest = {
        "case_id": case.case_id,
        "class_label": case.class_label,
        "frames": frame_files,
        "ed_index": seq.ed_index,
        "es_index": seq.es_index,
        "labels_ed": "labels_ed.vol",
        "labels_es": "labels_es.vol",
        "metadata": dict(case.metadata),
    }
    write_json(root / MANIFEST_NAME, manifest)
    _LOGGER.info("wrote case %s to %s", case.case_id, root)
    return root


def read_case(case_dir: Path | str) -> CaseData:
    """Read a case directory written by :func:`write_case`.

    :param case_dir: Case directory.
    :returns: Case contents.
    :raises ConfigError: If the manifest is malformed.
    :raises VolumeFormatError: If a volume file is malformed.
    """
    root = Path(case_dir)
    manifest = read_json(root / MANIFEST_NAME)
    if not isinstance(manifest, dict):
        raise ConfigError(f"{root / MANIFEST_NAME}: expected a JSON object")
    keys = (
        "case_id",
        "class_label",
        "frames",
        "ed_index",
        "es_index",
        "labels_ed",
        "labels_es",
        "metadata",
    )
    _types.check_keys(manifest, keys, "case manifest")
    missing = [k for k in keys[:-1] if k not in manifest]
    if missing:
        raise ConfigError(f"case manifest misses {', '.join(missing)}")
    frames = tuple(read_image(root / name) for name in manifest["frames"])
    sequence = _types.CineSequence(
        frames,
        int(manifest["ed_index"]),
        int(manifest["es_index"]),
        read_labels(root / manifest["labels_ed"]),
        read_labels(root / manifest["labels_es"]),
    )
    label = manifest["class_label"]
    return CaseData(
        case_id=str(manifest["case_id"]),
        class_label=None if label is None else str(label),
        sequence=sequence,
        metadata=dict(manifest.get("metadata", {})),
    )


def _write_frame(path: Path | str, frame: pd.DataFrame, *, index: bool) -> None:
    frame.to_csv(path, index=index, lineterminator="\n", encoding="utf-8")


def _table(
    case_ids: Sequence[str],
    labels: Sequence[str],
    names: Sequence[str],
    matrix: NDArray[np.float64],
) -> pd.DataFrame:
    frame = pd.DataFrame(matrix, columns=list(names))
    frame.insert(0, CLASS_COLUMN, list(labels))
    frame.insert(0, CASE_COLUMN, list(case_ids))
    return frame


def write_feature_vectors_csv(
    path: Path | str, vectors: Sequence[_types.FeatureVector]
) -> None:
    """Write feature vectors, labelled or not, as a features CSV.

    :param path: Destination.
    :param vectors: Vectors sharing one name ordering.
    :returns: None
    :raises ValidationError: If the vectors disagree on names.
    """
    if not vectors:
        raise ValidationError("no feature vectors given")
    names = vectors[0].names()
    if any(v.names() != names for v in vectors[1:]):
        raise ValidationError("feature vectors disagree on feature names")
    frame = _table(
        [v.case_id for v in vectors],
        [v.class_label for v in vectors],
        names,
        np.stack([v.as_array() for v in vectors]),
    )
    _write_frame(path, frame, index=False)


def features_frame(dataset: _types.Dataset) -> pd.DataFrame:
    """Tabulate a dataset.

    Columns are ``case_id``, ``class``, then one column per
    feature.

    :param dataset: Dataset to tabulate.
    :returns: Data frame.
    """
    return _table(
        dataset.case_ids, dataset.labels, dataset.feature_names, dataset.features
    )


def write_features_csv(path: Path | str, dataset: _types.Dataset) -> None:
    """Write a dataset as a features CSV.

    :param path: Destination.
    :param dataset: Dataset to write.
    :returns: None
    """
    _write_frame(path, features_frame(dataset), index=False)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Features CSV content, possibly without class labels.

    :param case_ids: Identifier per row.
    :param labels: Class per row, None where the cell is empty.
    :param feature_names: Feature columns.
    :param features: Matrix (cases, features).
    """

    case_ids: tuple[str, ...]
    labels: tuple[str | None, ...]
    feature_names: tuple[str, ...]
    features: NDArray[np.float64]

    def to_dataset(
        self, class_set: tuple[str, ...] = _types.ACDC_CLASSES
    ) -> _types.Dataset:
        """Build a dataset; every row must be labelled.

        :param class_set: Declared classes.
        :returns: Dataset.
        :raises ValidationError: If a row has no class label.
        """
        unlabelled = [
            c for c, lab in zip(self.case_ids, self.labels, strict=True) if not lab
        ]
        if unlabelled:
            raise ValidationError(f"case(s) without class label: {unlabelled}")
        return _types.Dataset(
            self.features,
            tuple(str(lab) for lab in self.labels),
            self.case_ids,
            self.feature_names,
            class_set,
        )


def read_feature_table(path: Path | str) -> FeatureTable:
    """Read a features CSV.

    :param path: Source file.
    :returns: Table; the ``class`` cell may be empty for unlabelled cases.
    :raises ValidationError: If required columns are missing or a value is
        not numeric.
    """
    frame = pd.read_csv(
        path, dtype={CASE_COLUMN: str, CLASS_COLUMN: str}, keep_default_na=False
    )
    for col in (CASE_COLUMN, CLASS_COLUMN):
        if col not in frame.columns:
            raise ValidationError(f"{path}: missing column {col!r}")
    names = [str(c) for c in frame.columns if c not in (CASE_COLUMN, CLASS_COLUMN)]
    try:
        values = frame[names].apply(pd.to_numeric).to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{path}: non-numeric feature value: {exc}") from None
    return FeatureTable(
        case_ids=tuple(str(c) for c in frame[CASE_COLUMN]),
        labels=tuple(str(c) or None for c in frame[CLASS_COLUMN]),
        feature_names=tuple(names),
        features=values.reshape(len(frame), len(names)),
    )


def read_features_csv(
    path: Path | str, class_set: tuple[str, ...] = _types.ACDC_CLASSES
) -> _types.Dataset:
    """Read a labelled features CSV.

    :param path: Source file.
    :param class_set: Declared classes.
    :returns: Dataset.
    :raises ValidationError: On missing labels or malformed values.
    """
    return read_feature_table(path).to_dataset(class_set)


def write_confusion_csv(
    path: Path | str, matrix: NDArray[np.int64], class_set: Sequence[str]
) -> None:
    """Write a confusion matrix with truth rows and predicted columns.

    :param path: Destination.
    :param matrix: Count matrix.
    :param class_set: Row and column names.
    :returns: None
    """
    frame = pd.DataFrame(matrix, index=list(class_set), columns=list(class_set))
    frame.index.name = "truth"
    _write_frame(path, frame, index=True)


def write_curve_csv(
    path: Path | str, points: Sequence[_evaluation.CurvePoint]
) -> None:
    """Write learning-curve points.

    :param path: Destination.
    :param points: Curve points.
    :returns: None
    """
    frame = pd.DataFrame(
        {
            "size": [p.size for p in points],
            "mean_accuracy": [p.mean_accuracy for p in points],
            "std_accuracy": [p.std_accuracy for p in points],
            "repeats": [p.repeats for p in points],
        }
    )
    _write_frame(path, frame, index=False)


def write_importance_csv(
    path: Path | str, rows: Sequence[_selection.FeatureImportance]
) -> None:
    """Write per-feature importance.

    :param path: Destination.
    :param rows: Importance entries.
    :returns: None
    """
    frame = pd.DataFrame(
        {
            "feature": [r.feature for r in rows],
            "without": [r.without for r in rows],
            "alone": [r.alone for r in rows],
        }
    )
    _write_frame(path, frame, index=False)


def table_csv(rows: Mapping[str, Sequence[Any]]) -> str:
    r"""Render a column mapping as CSV text.

    >>> table_csv({"label": [1, 2], "dice": [1.0, 0.5]})
    'label,dice\n1,1.0\n2,0.5\n'

    :param rows: Column name to values.
    :returns: CSV text.
    """
    return pd.DataFrame(dict(rows)).to_csv(index=False, lineterminator="\n")


def write_table_csv(path: Path | str, rows: Mapping[str, Sequence[Any]]) -> None:
    """Write a column mapping as CSV.

    :param path: Destination.
    :param rows: Column name to values.
    :returns: None
    """
    _write_frame(path, pd.DataFrame(dict(rows)), index=False)


__all__ = [
    "CASE_COLUMN",
    "CLASS_COLUMN",
    "MANIFEST_NAME",
    "CaseData",
    "FeatureTable",
    "VolumeLike",
    "case_from_phantom",
    "decode_volume",
    "dumps_json",
    "encode_volume",
    "features_frame",
    "read_case",
    "read_feature_table",
    "read_features_csv",
    "read_field",
    "read_image",
    "read_json",
    "read_labels",
    "read_volume",
    "table_csv",
    "write_case",
    "write_confusion_csv",
    "write_curve_csv",
    "write_feature_vectors_csv",
    "write_features_csv",
    "write_importance_csv",
    "write_json",
    "write_table_csv",
    "write_volume",
]
