"""Unit tests for the cardiomech command-line interface."""

import json
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

import cardiomech.cli.cardiomech as _cli
import cardiomech.formats as _formats
import cardiomech.registration as _registration
import cardiomech.types as _types
from cardiomech.errors import NumericalError


@pytest.fixture
def labels_file(tmp_path: Path) -> Path:
    """Fixture to provide a label map holding labels 1 to 6.

    :param tmp_path: Temporary directory.
    :returns: Path of the label map file.
    """
    grid = _types.Grid((6, 2, 2), (1.0, 1.0, 1.0))
    data = np.broadcast_to(np.arange(1, 7)[:, None, None], grid.dims)
    path = tmp_path / "labels.vol"
    _formats.write_volume(path, _types.LabelMap3(grid, data))
    return path


@pytest.fixture
def images(tmp_path: Path) -> tuple[Path, Path]:
    """Fixture to provide two identical textured 16³ images.

    :param tmp_path: Temporary directory.
    :returns: Paths of the fixed and moving images.
    """
    grid = _types.Grid((16, 16, 16), (1.0, 1.0, 1.0))
    data = np.random.default_rng(0).normal(size=grid.dims)
    fixed, moving = tmp_path / "fixed.vol", tmp_path / "moving.vol"
    _formats.write_volume(fixed, _types.Volume3(grid, data))
    _formats.write_volume(moving, _types.Volume3(grid, data))
    return fixed, moving


@pytest.fixture
def features_csv(tmp_path: Path) -> Path:
    """Fixture to provide a features CSV split by its ``signal`` column.

    :param tmp_path: Temporary directory.
    :returns: Path of the CSV.
    """
    rng = np.random.default_rng(5)
    signal = np.concatenate([rng.normal(0.0, 0.3, 10), rng.normal(4.0, 0.3, 10)])
    ds = _types.Dataset(
        np.column_stack([rng.normal(size=20), signal]),
        ("NOR",) * 10 + ("HCM",) * 10,
        tuple(f"case_{i:02d}" for i in range(20)),
        ("noise", "signal"),
    )
    path = tmp_path / "features.csv"
    _formats.write_features_csv(path, ds)
    return path


def test_help_exits_cleanly(capsys: pytest.CaptureFixture[str]) -> None:
    """Help lists the subcommands and exits 0.

    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    assert _cli.run(["--help"]) == _cli.EXIT_OK
    out = capsys.readouterr().out
    assert "register" in out
    assert "gradcheck" in out


@pytest.mark.parametrize("argv", [[], ["dice", "--bogus"], ["explode"]])
def test_usage_errors(argv: list[str], capsys: pytest.CaptureFixture[str]) -> None:
    """Missing commands and unknown flags exit with the validation code.

    :param argv: Arguments to parse.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    assert _cli.run(argv) == _cli.EXIT_INVALID
    assert "error:" in capsys.readouterr().err


def test_dice_identical(
    labels_file: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Identical maps score 1 for every label.

    :param labels_file: The label map fixture.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    assert _cli.run(["dice", str(labels_file), str(labels_file)]) == _cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["label,dice"] + [f"{i},1.0" for i in range(1, 7)]


def test_dice_anatomical_to_file(labels_file: Path, tmp_path: Path) -> None:
    """Anatomical scores are written to the requested CSV.

    :param labels_file: The label map fixture.
    :param tmp_path: Temporary directory.
    :returns: None
    """
    out = tmp_path / "dice.csv"
    argv = ["dice", str(labels_file), str(labels_file), "--anatomical"]
    assert _cli.run([*argv, "--out", str(out)]) == _cli.EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines() == [
        "structure,dice",
        "LV,1.0",
        "RV,1.0",
        "MYO,1.0",
    ]


def test_register_grid_mismatch(
    images: tuple[Path, Path],
    labels_file: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Images on different grids exit 1 and name the mismatch.

    :param images: The images fixture.
    :param labels_file: The label map fixture.
    :param tmp_path: Temporary directory.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    other = tmp_path / "small.vol"
    _formats.write_volume(
        other, _types.Volume3.full(_types.Grid((8, 8, 8), (1.0, 1.0, 1.0)), 0.0)
    )
    argv = ["register", "--fixed", str(images[0]), "--moving", str(other)]
    assert _cli.run([*argv, "--out", str(tmp_path / "u.vol")]) == _cli.EXIT_INVALID
    assert "grid mismatch" in capsys.readouterr().err
    argv = ["register", "--fixed", str(images[0]), "--moving", str(labels_file)]
    assert _cli.run([*argv, "--out", str(tmp_path / "u.vol")]) == _cli.EXIT_INVALID
    assert "expected an Image" in capsys.readouterr().err


def test_register_without_stages(
    images: tuple[Path, Path], tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """An empty cascade writes the zero field and its diagnostics.

    :param images: The images fixture.
    :param tmp_path: Temporary directory.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    config = tmp_path / "config.json"
    _formats.write_json(config, {"registration": {"stages": []}})
    out = tmp_path / "u.vol"
    argv = ["register", "-c", str(config), "--fixed", str(images[0])]
    argv += ["--moving", str(images[1]), "--out", str(out)]
    assert _cli.run(argv) == _cli.EXIT_OK
    field = _formats.read_field(out)
    assert not np.any(field.data)
    diagnostics = json.loads(capsys.readouterr().out)
    assert diagnostics["per_stage_losses"] == []
    assert diagnostics["final_loss"] == diagnostics["initial_loss"]


@pytest.mark.parametrize(
    ("error", "code"),
    [
        (NumericalError("loss became NaN"), _cli.EXIT_NUMERICAL),
        (KeyboardInterrupt(), _cli.EXIT_INTERRUPTED),
        (RuntimeError("boom"), _cli.EXIT_INVALID),
    ],
)
def test_error_exit_codes(
    images: tuple[Path, Path], tmp_path: Path, error: BaseException, code: int
) -> None:
    """Failure families map onto distinct exit codes.

    :param images: The images fixture.
    :param tmp_path: Temporary directory.
    :param error: Exception raised by the registration.
    :param code: Expected exit code.
    :returns: None
    """
    argv = ["register", "--fixed", str(images[0]), "--moving", str(images[1])]
    with patch.object(_registration, "register", side_effect=error):
        assert _cli.run([*argv, "--out", str(tmp_path / "u.vol")]) == code


def test_warp_labels_identity(labels_file: Path, tmp_path: Path) -> None:
    """A zero field reproduces the label map.

    :param labels_file: The label map fixture.
    :param tmp_path: Temporary directory.
    :returns: None
    """
    labels = _formats.read_labels(labels_file)
    field = tmp_path / "zero.vol"
    _formats.write_volume(field, _types.DisplacementField3.zeros(labels.grid))
    out = tmp_path / "warped.vol"
    argv = ["warp", "--input", str(labels_file), "--field", str(field)]
    assert _cli.run([*argv, "--out", str(out)]) == _cli.EXIT_OK
    np.testing.assert_array_equal(_formats.read_labels(out).data, labels.data)
    argv = ["warp", "--input", str(field), "--field", str(field)]
    assert _cli.run([*argv, "--out", str(out)]) == _cli.EXIT_INVALID


def test_strain_writes_maps(tmp_path: Path) -> None:
    """Every energy and moduli map is written.

    :param tmp_path: Temporary directory.
    :returns: None
    """
    grid = _types.Grid((8, 8, 8), (1.0, 1.0, 1.0))
    field = tmp_path / "u.vol"
    _formats.write_volume(field, _types.DisplacementField3.zeros(grid))
    out = tmp_path / "maps"
    argv = ["strain", "--field", str(field), "--out-dir", str(out)]
    assert _cli.run(argv) == _cli.EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "kappa.vol",
        "mu.vol",
        "phi.vol",
        "phi_dis.vol",
        "phi_vol.vol",
        "validity.vol",
    ]
    assert not np.any(_formats.read_labels(out / "validity.vol").data)


def test_select_train_predict_evaluate(
    features_csv: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Selection, training and prediction chain through their files.

    :param features_csv: The features CSV fixture.
    :param tmp_path: Temporary directory.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    selection = tmp_path / "selection.json"
    importance = tmp_path / "importance.csv"
    argv = ["select", "--features", str(features_csv), "--out", str(selection)]
    assert _cli.run([*argv, "--importance", str(importance)]) == _cli.EXIT_OK
    assert "selected 1 feature(s), accuracy 1.0000" in capsys.readouterr().out
    assert _formats.read_json(selection)["selected"] == ["signal"]
    assert importance.read_text(encoding="utf-8").startswith("feature,without,alone")

    model = tmp_path / "model.json"
    argv = ["train", "--features", str(features_csv), "--selection", str(selection)]
    assert _cli.run([*argv, "--out", str(model)]) == _cli.EXIT_OK
    doc = _formats.read_json(model)
    assert doc["name"] == "logreg"
    assert doc["features"] == ["signal"]

    argv = ["predict", "--model", str(model), "--features", str(features_csv)]
    assert _cli.run(argv) == _cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "case_id,predicted"
    assert lines[1] == "case_00,NOR"
    assert lines[-1] == "case_19,HCM"

    confusion = tmp_path / "confusion.csv"
    argv = ["evaluate", "--features", str(features_csv), "--model", str(model)]
    assert _cli.run([*argv, "--confusion", str(confusion)]) == _cli.EXIT_OK
    assert capsys.readouterr().out == "accuracy 1.0000\n"
    assert confusion.read_text(encoding="utf-8").splitlines()[1] == (
        "NOR,10,0,0,0,0"
    )


def test_evaluate_cross_validation(
    features_csv: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Without a model the evaluation is cross-validated.

    :param features_csv: The features CSV fixture.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    assert _cli.run(["evaluate", "--features", str(features_csv)]) == _cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("accuracy ")


def test_predict_missing_column(
    features_csv: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """A model asking for absent columns exits 1.

    :param features_csv: The features CSV fixture.
    :param tmp_path: Temporary directory.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    model = tmp_path / "model.json"
    argv = ["train", "--features", str(features_csv), "--out", str(model)]
    assert _cli.run(argv) == _cli.EXIT_OK
    doc = _formats.read_json(model)
    doc["features"] = ["noise", "strain"]
    _formats.write_json(model, doc)
    argv = ["predict", "--model", str(model), "--features", str(features_csv)]
    assert _cli.run(argv) == _cli.EXIT_INVALID
    assert "lacks model feature" in capsys.readouterr().err


def test_curve(features_csv: Path, tmp_path: Path) -> None:
    """The learning curve CSV has one row per size.

    :param features_csv: The features CSV fixture.
    :param tmp_path: Temporary directory.
    :returns: None
    """
    out = tmp_path / "curve.csv"
    argv = ["curve", "--features", str(features_csv), "--sizes", "10", "20"]
    assert _cli.run([*argv, "--repeats", "3", "--out", str(out)]) == _cli.EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("10,")


def test_gradcheck(capsys: pytest.CaptureFixture[str]) -> None:
    """Options reach the gradient check and the error is printed.

    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    with patch.object(_registration, "gradient_check", return_value=2.5e-5) as gc:
        argv = ["gradcheck", "--term", "nhe", "--field-kind", "linear", "--seed", "4"]
        assert _cli.run([*argv, "--identical-images"]) == _cli.EXIT_OK
    assert capsys.readouterr().out == "2.500000e-05\n"
    cfg = gc.call_args.args[0]
    assert cfg.seed == 4
    assert gc.call_args.args[1:] == (12, 50, 1e-3)
    assert gc.call_args.kwargs == {
        "term": "nhe",
        "field_kind": "linear",
        "identical_images": True,
    }


@pytest.mark.slow
def test_phantom_cohort(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Generated cases land in readable case directories.

    :param tmp_path: Temporary directory.
    :param capsys: Pytest fixture to capture output.
    :returns: None
    """
    argv = ["phantom", "--out", str(tmp_path), "--n-per-class", "1"]
    argv += ["--dims", "32", "32", "32", "--frames", "3", "--classes", "NOR", "RV"]
    assert _cli.run(argv) == _cli.EXIT_OK
    roots = capsys.readouterr().out.split()
    assert [Path(r).name for r in roots] == ["nor_000", "rv_000"]
    case = _formats.read_case(roots[1])
    assert case.class_label == "RV"
    assert len(case.sequence.frames) == 3
