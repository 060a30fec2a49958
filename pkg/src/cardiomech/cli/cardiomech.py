"""Command-line interface for CardioMech.

This module provides the ``cardiomech`` command. Each subcommand reads and
writes the toolkit's volume, case directory, CSV and JSON formats, so the
steps of the pipeline can be run and inspected one at a time.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn, cast

import numpy as np
from numpy.typing import NDArray

import cardiomech.biomech as _biomech
import cardiomech.config as _config
import cardiomech.evaluation as _evaluation
import cardiomech.formats as _formats
import cardiomech.phantom as _phantom
import cardiomech.pipeline as _pipeline
import cardiomech.propagation as _propagation
import cardiomech.registration as _registration
import cardiomech.selection as _selection
import cardiomech.types as _types
import cardiomech.volgrid as _volgrid
from cardiomech.errors import ConfigError, NumericalError, ValidationError
from cardiomech.registry import default_registry

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_INTERRUPTED = 130

_Command = Callable[[argparse.Namespace], int]


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the validation exit code on misuse."""

    def error(self, message: str) -> NoReturn:
        """Print usage and the message to stderr, then exit 1.

        :param message: Parser error message.
        """
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: Path | None) -> None:
    """Write text to a file, or to stdout when no file is given."""
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _pipeline_config(args: argparse.Namespace) -> _config.PipelineConfig:
    cfg = _config.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _read_selection(path: Path | None) -> _types.SelectionResult | None:
    if path is None:
        return None
    data = _formats.read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: selection must be a JSON object")
    return _types.SelectionResult.from_dict(cast("dict[str, Any]", data))


def _labelled_dataset(args: argparse.Namespace) -> _types.Dataset:
    dataset = _formats.read_features_csv(args.features)
    selection = _read_selection(getattr(args, "selection", None))
    if selection is not None:
        dataset = dataset.select_features(selection.selected)
    return dataset


def _columns(
    table: _formats.FeatureTable, names: Sequence[str]
) -> NDArray[np.float64]:
    """Pick feature columns by name.

    :param table: Features table.
    :param names: Columns in model order.
    :returns: Matrix (cases, len(names)).
    :raises ValidationError: If a column is missing.
    """
    index = {n: i for i, n in enumerate(table.feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise ValidationError(f"features CSV lacks model feature(s): {missing}")
    return table.features[:, [index[n] for n in names]]


def _read_model(path: Path) -> tuple[_types.Classifier, tuple[str, ...], list[str]]:
    data = _formats.read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: model must be a JSON object")
    doc = cast("dict[str, Any]", data)
    for key in ("class_set", "features"):
        if key not in doc:
            raise ConfigError(f"{path}: model document has no {key!r} entry")
    clf = default_registry.restore(doc)
    class_set = tuple(str(c) for c in doc["class_set"])
    return clf, class_set, [str(f) for f in doc["features"]]


def _cmd_phantom(args: argparse.Namespace) -> int:
    overrides: dict[str, Any] = {}
    if args.noise is not None:
        overrides["noise_sigma"] = args.noise
    base = _phantom.PhantomParams.for_grid(
        args.dims, (args.spacing,) * 3, args.frames, **overrides
    )
    cases = _phantom.generate_cohort(
        args.n_per_class,
        base,
        args.seed or 0,
        classes=args.classes,
        max_workers=args.workers,
    )
    for case in cases:
        root = _formats.write_case(
            args.out / case.case_id, _formats.case_from_phantom(case)
        )
        print(root)
    return EXIT_OK


def _cmd_register(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    fixed = _formats.read_image(args.fixed)
    moving = _formats.read_image(args.moving)
    result = _registration.register(fixed, moving, cfg.registration)
    _formats.write_volume(args.out, result.field)
    text = _formats.dumps_json(result.diagnostics())
    if args.diagnostics is None:
        sys.stdout.write(text)
    else:
        args.diagnostics.write_text(text, encoding="utf-8")
    return EXIT_OK


def _cmd_warp(args: argparse.Namespace) -> int:
    source = _formats.read_volume(args.input)
    field = _formats.read_field(args.field)
    if isinstance(source, _types.LabelMap3):
        _formats.write_volume(args.out, _volgrid.warp_labels(source, field))
    elif isinstance(source, _types.Volume3):
        _formats.write_volume(args.out, _volgrid.warp_volume(source, field))
    else:
        raise ValidationError(f"{args.input}: cannot warp a vector field")
    return EXIT_OK


def _cmd_dice(args: argparse.Namespace) -> int:
    a = _formats.read_labels(args.a)
    b = _formats.read_labels(args.b)
    if args.anatomical:
        scores = _propagation.anatomical_dice(a, b)
        rows: dict[str, Sequence[Any]] = {
            "structure": list(scores),
            "dice": list(scores.values()),
        }
    else:
        labels = list(_types.FOREGROUND_LABELS)
        rows = {
            "label": labels,
            "dice": [_propagation.dice(a, b, lab) for lab in labels],
        }
    _emit(_formats.table_csv(rows), args.out)
    return EXIT_OK


def _cmd_segment(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    case = _formats.read_case(args.case)
    labels = _propagation.multi_frame_segment(
        case.sequence,
        args.target,
        cfg.n_adjacent,
        cfg.registration,
        window=cfg.lwv_window,
        max_workers=cfg.max_workers,
    )
    _formats.write_volume(args.out, labels)
    truth = case.sequence.phase_labels(args.target)
    scores = _propagation.anatomical_dice(labels, truth)
    sys.stdout.write(
        _formats.table_csv(
            {"structure": list(scores), "dice": list(scores.values())}
        )
    )
    return EXIT_OK


def _cmd_strain(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    field = _formats.read_field(args.field)
    mat = cfg.registration.material
    energy = _biomech.energy_maps(field, mat)
    moduli = _biomech.moduli_from_energy(
        energy, mat, cfg.moduli_window, cfg.energy_floor
    )
    out: Path = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    maps: dict[str, _formats.VolumeLike] = {
        "phi": energy.phi,
        "phi_dis": energy.phi_dis,
        "phi_vol": energy.phi_vol,
        "mu": moduli.mu_map,
        "kappa": moduli.kappa_map,
        "validity": moduli.validity_mask,
    }
    for name, vol in maps.items():
        _formats.write_volume(out / f"{name}.vol", vol)
    if energy.fold_count:
        _LOGGER.warning("%d voxel(s) with J at or below the floor", energy.fold_count)
    return EXIT_OK


def _cmd_features(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    cases = [_formats.read_case(path) for path in args.case]
    vectors = [_pipeline.process_case(case, cfg) for case in cases]
    _formats.write_feature_vectors_csv(args.out, vectors)
    return EXIT_OK


def _cmd_select(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    dataset = _formats.read_features_csv(args.features)
    result = _selection.select_features(dataset, cfg.classifier, cfg.cv, cfg.seed)
    _formats.write_json(args.out, result.to_dict())
    if args.importance is not None:
        rows = _selection.feature_importance(
            dataset, result.selected, cfg.classifier, cfg.cv, cfg.seed
        )
        _formats.write_importance_csv(args.importance, rows)
    print(f"selected {len(result.selected)} feature(s), accuracy {result.acc_max:.4f}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    dataset = _labelled_dataset(args)
    clf = default_registry.create(cfg.classifier)
    clf.fit(dataset.features, dataset.y, len(dataset.class_set))
    doc = clf.to_dict()
    doc["class_set"] = list(dataset.class_set)
    doc["features"] = list(dataset.feature_names)
    _formats.write_json(args.out, doc)
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    clf, class_set, names = _read_model(args.model)
    table = _formats.read_feature_table(args.features)
    pred = clf.predict(_columns(table, names))
    rows = {
        "case_id": list(table.case_ids),
        "predicted": [class_set[int(i)] for i in pred],
    }
    _emit(_formats.table_csv(rows), args.out)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if args.model is not None:
        clf, class_set, names = _read_model(args.model)
        dataset = _formats.read_features_csv(args.features, class_set)
        pred = clf.predict(_columns(_formats.read_feature_table(args.features), names))
    else:
        cfg = _pipeline_config(args)
        dataset = _labelled_dataset(args)
        pred = _evaluation.cross_val_predict(dataset, cfg.classifier, cfg.cv, cfg.seed)
    predicted = [dataset.class_set[int(i)] for i in pred]
    accuracy = float(np.mean(pred == dataset.y))
    if args.confusion is not None:
        matrix = _evaluation.confusion_matrix(
            dataset.labels, predicted, dataset.class_set
        )
        _formats.write_confusion_csv(args.confusion, matrix, dataset.class_set)
    print(f"accuracy {accuracy:.4f}")
    return EXIT_OK


def _cmd_curve(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    dataset = _labelled_dataset(args)
    points = _evaluation.learning_curve(
        dataset, args.sizes, args.repeats, cfg.classifier, cfg.seed, cfg.cv
    )
    _formats.write_curve_csv(args.out, points)
    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    err = _registration.gradient_check(
        cfg.registration,
        args.grid_size,
        args.probes,
        args.eps,
        term=args.term,
        field_kind=args.field_kind,
        identical_images=args.identical_images,
    )
    print(f"{err:.6e}")
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase output verbosity (e.g., -v for INFO, -vv for DEBUG)",
    )
    common.add_argument(
        "--seed", type=int, default=None, help="Seed of every random choice"
    )
    return common


def _with_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-c", "--config", type=Path, default=None, help="Pipeline config JSON"
    )


def _features_args(parser: argparse.ArgumentParser, *, selection: bool) -> None:
    parser.add_argument("--features", type=Path, required=True, help="Features CSV")
    if selection:
        parser.add_argument(
            "--selection",
            type=Path,
            default=None,
            help="Selection JSON restricting the feature columns",
        )


def build_parser() -> argparse.ArgumentParser:  # noqa: PLR0915
    """Build the argument parser with every subcommand.

    :returns: Parser whose namespaces carry the handler in ``func``.
    """
    common = _common_parser()
    parser = _Parser(
        prog="cardiomech",
        description="Cardiac motion registration, biomechanics and classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, func: _Command, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("phantom", _cmd_phantom, "Generate a synthetic phantom cohort")
    p.add_argument("--out", type=Path, required=True, help="Cohort directory")
    p.add_argument("--n-per-class", type=int, default=10, help="Cases per class")
    p.add_argument(
        "--dims", type=int, nargs=3, default=[48, 48, 48], help="Grid size"
    )
    p.add_argument("--spacing", type=float, default=1.5, help="Voxel size in mm")
    p.add_argument("--frames", type=int, default=10, help="Frames per cycle")
    p.add_argument("--noise", type=float, default=None, help="Noise sigma")
    p.add_argument(
        "--classes",
        nargs="+",
        default=list(_types.ACDC_CLASSES),
        help="Classes to generate",
    )
    p.add_argument("--workers", type=int, default=None, help="Thread pool size")

    p = add("register", _cmd_register, "Register a moving image to a fixed image")
    _with_config(p)
    p.add_argument("--fixed", type=Path, required=True, help="Fixed image")
    p.add_argument("--moving", type=Path, required=True, help="Moving image")
    p.add_argument("--out", type=Path, required=True, help="Output field")
    p.add_argument(
        "--diagnostics", type=Path, default=None, help="Diagnostics JSON file"
    )

    p = add("warp", _cmd_warp, "Warp an image or a label map by a field")
    p.add_argument("--input", type=Path, required=True, help="Image or label map")
    p.add_argument("--field", type=Path, required=True, help="Displacement field")
    p.add_argument("--out", type=Path, required=True, help="Output volume")

    p = add("dice", _cmd_dice, "Compare two label maps")
    p.add_argument("a", type=Path, help="First label map")
    p.add_argument("b", type=Path, help="Second label map")
    p.add_argument(
        "--anatomical",
        action="store_true",
        help="Report LV, RV and merged myocardium instead of labels 1-6",
    )
    p.add_argument("--out", type=Path, default=None, help="CSV file")

    p = add("segment", _cmd_segment, "Segment a phase by multi-frame propagation")
    _with_config(p)
    p.add_argument("--case", type=Path, required=True, help="Case directory")
    p.add_argument("--target", choices=("ed", "es"), default="es", help="Phase")
    p.add_argument("--out", type=Path, required=True, help="Output label map")

    p = add("strain", _cmd_strain, "Compute energy and moduli maps of a field")
    _with_config(p)
    p.add_argument("--field", type=Path, required=True, help="Displacement field")
    p.add_argument("--out-dir", type=Path, required=True, help="Output directory")

    p = add("features", _cmd_features, "Extract feature vectors of cases")
    _with_config(p)
    p.add_argument(
        "--case", type=Path, nargs="+", required=True, help="Case directories"
    )
    p.add_argument("--out", type=Path, required=True, help="Features CSV")

    p = add("select", _cmd_select, "Run greedy feature selection")
    _with_config(p)
    _features_args(p, selection=False)
    p.add_argument("--out", type=Path, required=True, help="Selection JSON")
    p.add_argument(
        "--importance", type=Path, default=None, help="Feature importance CSV"
    )

    p = add("train", _cmd_train, "Train a classifier")
    _with_config(p)
    _features_args(p, selection=True)
    p.add_argument("--out", type=Path, required=True, help="Model JSON")

    p = add("predict", _cmd_predict, "Predict classes with a trained model")
    p.add_argument("--model", type=Path, required=True, help="Model JSON")
    p.add_argument("--features", type=Path, required=True, help="Features CSV")
    p.add_argument("--out", type=Path, default=None, help="Predictions CSV")

    p = add("evaluate", _cmd_evaluate, "Cross-validate or test a model")
    _with_config(p)
    _features_args(p, selection=True)
    p.add_argument(
        "--model", type=Path, default=None, help="Evaluate this model instead of CV"
    )
    p.add_argument("--confusion", type=Path, default=None, help="Confusion CSV")

    p = add("curve", _cmd_curve, "Compute a learning curve")
    _with_config(p)
    _features_args(p, selection=True)
    p.add_argument(
        "--sizes", type=int, nargs="+", required=True, help="Training set sizes"
    )
    p.add_argument(
        "--repeats",
        type=int,
        default=_evaluation.DEFAULT_REPEATS,
        help="Subsamples per size",
    )
    p.add_argument("--out", type=Path, required=True, help="Curve CSV")

    p = add("gradcheck", _cmd_gradcheck, "Check analytic against numeric gradients")
    _with_config(p)
    p.add_argument("--grid-size", type=int, default=12, help="Probe grid size")
    p.add_argument("--probes", type=int, default=50, help="Probed components")
    p.add_argument("--eps", type=float, default=1e-3, help="Finite difference step")
    p.add_argument(
        "--term", choices=("total", "sim", "nhe"), default="total", help="Loss term"
    )
    p.add_argument(
        "--field-kind",
        choices=("random", "linear", "zero"),
        default="random",
        help="Probe field",
    )
    p.add_argument(
        "--identical-images",
        action="store_true",
        help="Use the same image as fixed and moving",
    )
    return parser


def _configure_logging(verbose: int) -> None:
    log_level = logging.WARNING
    if verbose == 1:
        log_level = logging.INFO
    elif verbose >= 2:  # noqa: PLR2004
        log_level = logging.DEBUG

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand and map errors to exit codes.

    :param argv: Arguments without the program name; ``sys.argv`` when None.
    :returns: 0 on success, 1 on invalid input, 2 on numerical failure and
        130 when interrupted.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return EXIT_OK
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID

    _configure_logging(args.verbose)
    func = cast("_Command", args.func)
    try:
        return func(args)
    except KeyboardInterrupt:
        print("\nCancelled by user.", file=sys.stderr)
        return EXIT_INTERRUPTED
    except ValidationError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as e:
        _LOGGER.debug("unhandled error", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID


def main() -> NoReturn:
    """Entry point for the cardiomech command."""
    sys.exit(run())


if __name__ == "__main__":
    main()
