"""Unit tests for cardiomech.types module."""

import numpy as np
import pytest

import cardiomech.types as _types
from cardiomech.errors import ConfigError, GridMismatchError, ValidationError


@pytest.fixture
def grid() -> _types.Grid:
    """Fixture to provide a small anisotropic grid.

    :returns: A 5x4x3 grid.
    """
    return _types.Grid((5, 4, 3), (1.0, 1.5, 2.0), (10.0, 0.0, -5.0))


def test_grid_points_and_voxels(grid: _types.Grid) -> None:
    """Physical points and voxel indices are consistent.

    :param grid: The grid fixture.
    :returns: None
    """
    pts = grid.physical_points()
    assert pts.shape == (5, 4, 3, 3)
    assert tuple(pts[1, 2, 1]) == (11.0, 3.0, -3.0)
    np.testing.assert_allclose(grid.to_voxel(pts), grid.voxel_indices())
    assert grid.size == 60
    assert grid.voxel_volume_mm3 == pytest.approx(3.0)


@pytest.mark.parametrize(
    ("dims", "spacing"),
    [
        ((0, 4, 3), (1.0, 1.0, 1.0)),
        ((4, 4), (1.0, 1.0, 1.0)),
        ((4, 4, 4), (1.0, 0.0, 1.0)),
        ((4, 4, 4), (1.0, float("nan"), 1.0)),
    ],
)
def test_grid_rejects_invalid(
    dims: tuple[int, ...], spacing: tuple[float, ...]
) -> None:
    """Invalid dims or spacing raise ValidationError.

    :param dims: Grid dims.
    :param spacing: Grid spacing.
    :returns: None
    """
    with pytest.raises(ValidationError):
        _types.Grid(dims, spacing)  # type: ignore[arg-type]


def test_grid_coarsen(grid: _types.Grid) -> None:
    """Coarsening rounds up and centres coarse voxels on their blocks.

    :param grid: The grid fixture.
    :returns: None
    """
    coarse = grid.coarsen(2)
    assert coarse.dims == (3, 2, 2)
    assert coarse.spacing == (2.0, 3.0, 4.0)
    assert coarse.origin == (10.5, 0.75, -4.0)
    assert grid.coarsen(1) is grid
    with pytest.raises(ValidationError):
        grid.coarsen(0)


def test_grid_require_same(grid: _types.Grid) -> None:
    """Mismatched grids raise GridMismatchError.

    :param grid: The grid fixture.
    :returns: None
    """
    grid.require_same(_types.Grid.from_dict(grid.to_dict()))
    with pytest.raises(GridMismatchError):
        grid.require_same(_types.Grid((5, 4, 3), (1.0, 1.5, 2.5), grid.origin))
    with pytest.raises(ConfigError):
        _types.Grid.from_dict({"dims": [1, 1, 1], "spacing": [1, 1, 1], "x": 0})


def test_containers_are_read_only(grid: _types.Grid) -> None:
    """Volumes are coerced to float32 and frozen.

    :param grid: The grid fixture.
    :returns: None
    """
    vol = _types.Volume3(grid, np.ones(grid.dims, dtype=np.float64))
    assert vol.data.dtype == np.float32
    with pytest.raises(ValueError, match="read-only"):
        vol.data[0, 0, 0] = 2.0


def test_containers_validate(grid: _types.Grid) -> None:
    """Shape, finiteness and label range are checked.

    :param grid: The grid fixture.
    :returns: None
    """
    with pytest.raises(ValidationError):
        _types.Volume3(grid, np.zeros((5, 4, 2)))
    bad = np.zeros(grid.dims)
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValidationError):
        _types.Volume3(grid, bad)
    with pytest.raises(ValidationError):
        _types.LabelMap3(grid, np.full(grid.dims, 300))
    field = _types.DisplacementField3.constant(grid, (1.0, 2.0, 3.0))
    assert field.data.shape == (5, 4, 3, 3)
    assert tuple(field.data[4, 3, 2]) == (1.0, 2.0, 3.0)


def test_label_map_helpers(grid: _types.Grid) -> None:
    """Labels and masks are reported.

    :param grid: The grid fixture.
    :returns: None
    """
    data = np.zeros(grid.dims, dtype=np.uint8)
    data[0] = 3
    labels = _types.LabelMap3(grid, data)
    assert labels.labels() == (0, 3)
    assert int(labels.mask(3).sum()) == 12


def test_reg_config_round_trip() -> None:
    """RegConfig serializes lambda under its JSON key and reads it back.

    :returns: None
    """
    cfg = _types.RegConfig(lam=0.25, material=_types.MaterialParams(3.0, 50.0))
    data = cfg.to_dict()
    assert data["lambda"] == 0.25
    assert "lam" not in data
    assert _types.RegConfig.from_dict(data) == cfg


@pytest.mark.parametrize(
    "data",
    [
        {"lam": 0.1},
        {"sim": {"window": [3]}},
        {"material": {"mu": 1.0, "nu": 0.3}},
        {"stages": [{"scale_factor": 1, "iterations": 1, "step": 0.1}]},
    ],
)
def test_reg_config_unknown_keys(data: dict[str, object]) -> None:
    """Unknown keys at any level raise ConfigError.

    :param data: Config document.
    :returns: None
    """
    with pytest.raises(ConfigError):
        _types.RegConfig.from_dict(data)


def test_reg_config_validation() -> None:
    """Stage ordering and ranges are enforced.

    :returns: None
    """
    with pytest.raises(ValidationError):
        _types.RegConfig(stages=(_types.Stage(1, 5, 0.1), _types.Stage(2, 5, 0.1)))
    with pytest.raises(ValidationError):
        _types.RegConfig(stages=(_types.Stage(2, 5, 0.1),))
    with pytest.raises(ValidationError):
        _types.RegConfig(lam=-1.0)
    with pytest.raises(ValidationError):
        _types.SimConfig(windows=(4,))
    with pytest.raises(ValidationError):
        _types.MaterialParams(mu=0.0)
    with pytest.raises(ValidationError):
        _types.CVSpec(folds=1)


def test_cine_sequence_phases(grid: _types.Grid) -> None:
    """Phase lookups return the annotated frames.

    :param grid: The grid fixture.
    :returns: None
    """
    frames = tuple(_types.Volume3.full(grid, float(i)) for i in range(4))
    ed = _types.LabelMap3(grid, np.zeros(grid.dims))
    es = _types.LabelMap3(grid, np.ones(grid.dims))
    seq = _types.CineSequence(frames, 0, 2, ed, es)
    assert seq.phase_index("es") == 2
    assert seq.phase_labels("ed") is ed
    assert seq.labels_for_frame(2) is es
    assert seq.labels_for_frame(1) is None
    with pytest.raises(ValidationError):
        _types.CineSequence(frames, 1, 1, ed, es)
    with pytest.raises(ValidationError):
        _types.CineSequence(frames, 0, 4, ed, es)


@pytest.fixture
def dataset() -> _types.Dataset:
    """Fixture to provide a four-case dataset.

    :returns: Dataset with two features.
    """
    return _types.Dataset(
        np.arange(8, dtype=np.float64).reshape(4, 2),
        ("NOR", "DCM", "NOR", "RV"),
        ("a", "b", "c", "d"),
        ("f1", "f2"),
    )


def test_dataset_subsets(dataset: _types.Dataset) -> None:
    """Column and row subsets keep their alignment.

    :param dataset: The dataset fixture.
    :returns: None
    """
    assert dataset.y.tolist() == [0, 2, 0, 4]
    cols = dataset.select_features(["f2"])
    assert cols.features[:, 0].tolist() == [1.0, 3.0, 5.0, 7.0]
    rows = dataset.select_cases([3, 0])
    assert rows.case_ids == ("d", "a")
    assert rows.labels == ("RV", "NOR")
    with pytest.raises(ValidationError):
        dataset.select_features(["missing"])


def test_dataset_validation() -> None:
    """Unknown classes, duplicate names and NaNs are rejected.

    :returns: None
    """
    with pytest.raises(ValidationError):
        _types.Dataset(np.zeros((1, 1)), ("XYZ",), ("a",), ("f",))
    with pytest.raises(ValidationError):
        _types.Dataset(np.zeros((1, 2)), ("NOR",), ("a",), ("f", "f"))
    with pytest.raises(ValidationError):
        _types.Dataset(np.full((1, 1), np.nan), ("NOR",), ("a",), ("f",))


def test_dataset_from_feature_vectors() -> None:
    """Vectors are stacked in order and must share names.

    :returns: None
    """
    v1 = _types.FeatureVector(_types.CaseID("a"), "NOR", (("x", 1.0), ("y", 2.0)))
    v2 = _types.FeatureVector(_types.CaseID("b"), "HCM", (("x", 3.0), ("y", 4.0)))
    ds = _types.Dataset.from_feature_vectors([v1, v2])
    assert ds.feature_names == ("x", "y")
    assert ds.features.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    v3 = _types.FeatureVector(_types.CaseID("c"), "NOR", (("y", 1.0), ("x", 2.0)))
    with pytest.raises(ValidationError):
        _types.Dataset.from_feature_vectors([v1, v3])


def test_selection_result_round_trip() -> None:
    """SelectionResult survives its JSON mapping.

    :returns: None
    """
    result = _types.SelectionResult(
        selected=("a",),
        discarded=("b",),
        acc_max=0.75,
        trace=(_types.SelectionStep(0, "b", "removed", 0.75),),
    )
    assert _types.SelectionResult.from_dict(result.to_dict()) == result
    with pytest.raises(ConfigError):
        _types.SelectionResult.from_dict({**result.to_dict(), "extra": 1})


def test_classifier_spec_round_trip() -> None:
    """ClassifierSpec defaults to logreg and keeps params.

    :returns: None
    """
    spec = _types.ClassifierSpec.from_dict({"name": "knn", "params": {"k": 3}})
    assert spec.name == "knn"
    assert spec.to_dict() == {"name": "knn", "params": {"k": 3}}
    assert _types.ClassifierSpec.from_dict({}).name == "logreg"
