"""Unit tests for cardiomech.formats module."""

from pathlib import Path

import numpy as np
import pytest

import cardiomech.evaluation as _evaluation
import cardiomech.formats as _formats
import cardiomech.selection as _selection
import cardiomech.types as _types
from cardiomech.errors import (
    ConfigError,
    HeaderError,
    TruncatedPayloadError,
    UnknownElementTypeError,
    ValidationError,
)


@pytest.fixture
def grid() -> _types.Grid:
    """Fixture to provide an anisotropic 5x4x3 grid with an offset.

    :returns: The grid.
    """
    return _types.Grid((5, 4, 3), (1.25, 1.25, 8.0), (-3.0, 0.5, 10.0))


@pytest.fixture
def image(grid: _types.Grid) -> _types.Volume3:
    """Fixture to provide a float image with distinct voxel values.

    :param grid: The grid fixture.
    :returns: The image.
    """
    data = np.arange(grid.size, dtype=np.float32).reshape(grid.dims) / 7.0
    return _types.Volume3(grid, data)


def test_volume_round_trip(image: _types.Volume3) -> None:
    """Images re-encode to identical bytes and values.

    :param image: The image fixture.
    :returns: None
    """
    raw = _formats.encode_volume(image)
    decoded = _formats.decode_volume(raw)
    assert isinstance(decoded, _types.Volume3)
    assert decoded.grid == image.grid
    np.testing.assert_array_equal(decoded.data, image.data.astype(np.float32))
    assert _formats.encode_volume(decoded) == raw


def test_volume_header_layout(image: _types.Volume3) -> None:
    """The header ends at DataOffsetBytes and the payload is x-fastest.

    :param image: The image fixture.
    :returns: None
    """
    raw = _formats.encode_volume(image)
    text = raw.split(b"DataOffsetBytes = ")[0].decode()
    assert text.startswith("ObjectType = Image\nNDims = 3\nDimSize = 5 4 3\n")
    offset = int(raw.split(b"DataOffsetBytes = ")[1].split(b"\n")[0])
    assert len(raw) - offset == 5 * 4 * 3 * 4
    payload = np.frombuffer(raw, dtype="<f4", offset=offset)
    assert payload[1] == pytest.approx(float(image.data[1, 0, 0]))
    assert payload[5] == pytest.approx(float(image.data[0, 1, 0]))


def test_field_and_labels_round_trip(grid: _types.Grid) -> None:
    """Vector fields interleave components; label maps are bytes.

    :param grid: The grid fixture.
    :returns: None
    """
    rng = np.random.default_rng(1)
    field = _types.DisplacementField3(grid, rng.normal(size=(*grid.dims, 3)))
    decoded = _formats.decode_volume(_formats.encode_volume(field))
    assert isinstance(decoded, _types.DisplacementField3)
    np.testing.assert_array_equal(decoded.data, field.data.astype(np.float32))
    labels = _types.LabelMap3(grid, rng.integers(0, 7, grid.dims))
    raw = _formats.encode_volume(labels)
    assert b"ElementType = UINT8\nChannels = 1\n" in raw
    decoded_labels = _formats.decode_volume(raw)
    assert isinstance(decoded_labels, _types.LabelMap3)
    np.testing.assert_array_equal(decoded_labels.data, labels.data)


def test_truncated_payload(image: _types.Volume3) -> None:
    """A payload one byte short names both sizes.

    :param image: The image fixture.
    :returns: None
    """
    raw = _formats.encode_volume(image)
    with pytest.raises(TruncatedPayloadError, match="expected 240 bytes, found 239"):
        _formats.decode_volume(raw[:-1])


def test_image_with_three_channels(image: _types.Volume3) -> None:
    """An Image header announcing three channels breaks the schema.

    :param image: The image fixture.
    :returns: None
    """
    raw = _formats.encode_volume(image).replace(b"Channels = 1", b"Channels = 3")
    with pytest.raises(HeaderError):
        _formats.decode_volume(raw)


def test_unknown_element_type(image: _types.Volume3) -> None:
    """Unsupported element types get their own error kind.

    :param image: The image fixture.
    :returns: None
    """
    raw = _formats.encode_volume(image).replace(b"FLOAT32", b"FLOAT64")
    with pytest.raises(UnknownElementTypeError):
        _formats.decode_volume(raw)


@pytest.mark.parametrize(
    ("old", "new"),
    [
        (b"NDims = 3", b"NDims = 2"),
        (b"NDims = 3", b"Colour = 3"),
        (b"ObjectType = Image", b"ObjectType = Curve"),
        (b"DimSize = 5 4 3", b"DimSize = 5 4 x"),
    ],
)
def test_malformed_header(image: _types.Volume3, old: bytes, new: bytes) -> None:
    """Bad values and unknown keys raise HeaderError.

    :param image: The image fixture.
    :param old: Header text to replace.
    :param new: Replacement text.
    :returns: None
    """
    raw = _formats.encode_volume(image).replace(old, new)
    with pytest.raises(HeaderError):
        _formats.decode_volume(raw)


def test_unterminated_header() -> None:
    """A header without DataOffsetBytes raises HeaderError.

    :returns: None
    """
    with pytest.raises(HeaderError):
        _formats.decode_volume(b"ObjectType = Image\nNDims = 3\n")


def test_typed_readers(tmp_path: Path, image: _types.Volume3) -> None:
    """Typed readers refuse other object types.

    :param tmp_path: Temporary directory.
    :param image: The image fixture.
    :returns: None
    """
    path = tmp_path / "image.vol"
    _formats.write_volume(path, image)
    assert isinstance(_formats.read_image(path), _types.Volume3)
    with pytest.raises(HeaderError, match="expected a VectorField"):
        _formats.read_field(path)
    with pytest.raises(HeaderError, match="expected a LabelMap"):
        _formats.read_labels(path)


def test_read_json_invalid(tmp_path: Path) -> None:
    """Broken JSON raises ConfigError.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        _formats.read_json(path)
    _formats.write_json(path, {"b": 1, "a": [2]})
    assert path.read_text(encoding="utf-8").startswith('{\n  "a": [\n')
    assert _formats.read_json(path) == {"a": [2], "b": 1}


def test_case_round_trip(tmp_path: Path, grid: _types.Grid) -> None:
    """A case directory reproduces frames, phases, labels and metadata.

    :param tmp_path: Temporary directory.
    :param grid: The grid fixture.
    :returns: None
    """
    frames = tuple(_types.Volume3.full(grid, float(i)) for i in range(3))
    ed = _types.LabelMap3(grid, np.ones(grid.dims))
    es = _types.LabelMap3(grid, np.full(grid.dims, 2))
    seq = _types.CineSequence(frames, 0, 2, ed, es)
    case = _formats.CaseData("case_7", "DCM", seq, {"source": "test"})
    root = _formats.write_case(tmp_path / "case_7", case)
    assert (root / _formats.MANIFEST_NAME).is_file()
    assert (root / "frame_002.vol").is_file()
    loaded = _formats.read_case(root)
    assert loaded.case_id == "case_7"
    assert loaded.class_label == "DCM"
    assert loaded.metadata == {"source": "test"}
    assert loaded.sequence.es_index == 2
    assert [float(f.data[0, 0, 0]) for f in loaded.sequence.frames] == [0.0, 1.0, 2.0]
    np.testing.assert_array_equal(loaded.sequence.labels_es.data, es.data)


def test_read_case_malformed_manifest(tmp_path: Path) -> None:
    """Manifests with unknown or missing keys raise ConfigError.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    _formats.write_json(tmp_path / _formats.MANIFEST_NAME, {"case_id": "a"})
    with pytest.raises(ConfigError, match="misses"):
        _formats.read_case(tmp_path)
    _formats.write_json(tmp_path / _formats.MANIFEST_NAME, {"colour": "red"})
    with pytest.raises(ConfigError):
        _formats.read_case(tmp_path)


def test_features_csv_round_trip(tmp_path: Path) -> None:
    """Datasets survive the features CSV.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    ds = _types.Dataset(
        np.array([[1.5, -2.0], [0.25, 3.0]]),
        ("NOR", "MINF"),
        ("007", "b"),
        ("mu_1_mean_ED", "vol_2_ml_ES"),
    )
    path = tmp_path / "features.csv"
    _formats.write_features_csv(path, ds)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "case_id,class,mu_1_mean_ED,vol_2_ml_ES"
    loaded = _formats.read_features_csv(path)
    assert loaded.case_ids == ("007", "b")
    assert loaded.labels == ds.labels
    assert loaded.feature_names == ds.feature_names
    np.testing.assert_array_equal(loaded.features, ds.features)


def test_feature_table_unlabelled(tmp_path: Path) -> None:
    """Empty class cells read as None and refuse to become a dataset.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    path = tmp_path / "features.csv"
    path.write_text("case_id,class,f\na,,1.0\nb,NOR,2.0\n", encoding="utf-8")
    table = _formats.read_feature_table(path)
    assert table.labels == (None, "NOR")
    with pytest.raises(ValidationError, match="without class label"):
        table.to_dataset()
    path.write_text("case_id,class,f\na,NOR,high\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="non-numeric"):
        _formats.read_feature_table(path)
    path.write_text("case_id,f\na,1.0\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="missing column"):
        _formats.read_feature_table(path)


def test_feature_vectors_csv(tmp_path: Path) -> None:
    """Vectors with differing names are refused.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    a = _types.FeatureVector("a", "NOR", (("x", 1.0), ("y", 2.0)))
    b = _types.FeatureVector("b", "HCM", (("x", 3.0), ("y", 4.0)))
    path = tmp_path / "vectors.csv"
    _formats.write_feature_vectors_csv(path, [a, b])
    assert path.read_text(encoding="utf-8").splitlines()[2] == "b,HCM,3.0,4.0"
    c = _types.FeatureVector("c", "HCM", (("y", 1.0),))
    with pytest.raises(ValidationError):
        _formats.write_feature_vectors_csv(path, [a, c])
    with pytest.raises(ValidationError):
        _formats.write_feature_vectors_csv(path, [])


def test_report_csvs(tmp_path: Path) -> None:
    """Confusion, curve and importance tables have fixed headers.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    confusion = tmp_path / "confusion.csv"
    _formats.write_confusion_csv(
        confusion, np.array([[2, 0], [1, 3]], dtype=np.int64), ("NOR", "DCM")
    )
    assert confusion.read_text(encoding="utf-8") == (
        "truth,NOR,DCM\nNOR,2,0\nDCM,1,3\n"
    )
    curve = tmp_path / "curve.csv"
    _formats.write_curve_csv(curve, [_evaluation.CurvePoint(10, 0.5, 0.1, 5)])
    assert curve.read_text(encoding="utf-8").splitlines() == [
        "size,mean_accuracy,std_accuracy,repeats",
        "10,0.5,0.1,5",
    ]
    importance = tmp_path / "importance.csv"
    _formats.write_importance_csv(
        importance, [_selection.FeatureImportance("mu_1_mean_ED", 0.75, 0.5)]
    )
    assert importance.read_text(encoding="utf-8").splitlines()[1] == (
        "mu_1_mean_ED,0.75,0.5"
    )


def test_feature_table_requires_class_column(tmp_path: Path) -> None:
    """The label column must be named ``class``.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    path = tmp_path / "features.csv"
    path.write_text("case_id,class_label,f\na,NOR,1.0\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="missing column 'class'"):
        _formats.read_feature_table(path)
