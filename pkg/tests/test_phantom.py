"""Unit tests for cardiomech.phantom module."""

import numpy as np
import pytest

import cardiomech.phantom as _phantom
import cardiomech.propagation as _propagation
import cardiomech.types as _types
import cardiomech.volgrid as _volgrid
from cardiomech.errors import ConfigError, ValidationError


@pytest.fixture(scope="module")
def params() -> _phantom.PhantomParams:
    """Fixture to provide a four-frame NOR phantom on a 32³ grid.

    :returns: Phantom parameters.
    """
    return _phantom.PhantomParams.for_grid((32, 32, 32), (1.5, 1.5, 1.5), frames=4)


@pytest.fixture(scope="module")
def case(params: _phantom.PhantomParams) -> _phantom.PhantomCase:
    """Fixture to provide a generated case.

    :param params: The params fixture.
    :returns: Phantom case.
    """
    return _phantom.generate_case(params, seed=3)


@pytest.mark.parametrize(
    "overrides",
    [
        {"frames": 2},
        {"lv_inner_radius_mm": 20.0, "lv_outer_radius_mm": 10.0},
        {"contraction_amplitude": 1.0},
        {"infarct_weight": 1.5},
        {"noise_sigma": -0.1},
        {"class_preset": "XYZ"},
        {"wall_thickness_scale": 0.0},
    ],
)
def test_params_validation(overrides: dict[str, object]) -> None:
    """Invalid geometry and amplitudes raise ValidationError.

    :param overrides: Field values to apply.
    :returns: None
    """
    with pytest.raises(ValidationError):
        _phantom.PhantomParams(**overrides)  # type: ignore[arg-type]


def test_params_for_grid(params: _phantom.PhantomParams) -> None:
    """Geometry scales with the grid extent.

    :param params: The params fixture.
    :returns: None
    """
    extent = 31 * 1.5
    assert params.dims == (32, 32, 32)
    assert params.lv_inner_radius_mm == pytest.approx(0.09 * extent)
    assert params.lv_centre_mm == pytest.approx((0.4 * extent, extent / 2, extent / 2))
    assert params.es_index == 2
    assert params.cycle(0) == 0.0
    assert params.cycle(2) == pytest.approx(1.0)


def test_params_round_trip(params: _phantom.PhantomParams) -> None:
    """Parameters survive their JSON mapping and reject unknown keys.

    :param params: The params fixture.
    :returns: None
    """
    assert _phantom.PhantomParams.from_dict(params.to_dict()) == params
    with pytest.raises(ConfigError):
        _phantom.PhantomParams.from_dict({"heart_rate": 60})


def test_wall_thickness_scale() -> None:
    """Thickening grows the wall in both directions.

    :returns: None
    """
    base = _phantom.PhantomParams()
    thick = _phantom.PhantomParams(wall_thickness_scale=1.5)
    assert thick.wall_thickness_mm == pytest.approx(1.5 * base.wall_thickness_mm)
    assert thick.effective_radii[0] < base.effective_radii[0]
    assert thick.effective_radii[1] > base.effective_radii[1]


def test_maps_are_inverse(params: _phantom.PhantomParams) -> None:
    """The forward map undoes the backward map.

    :param params: The params fixture.
    :returns: None
    """
    pts = params.grid.physical_points()[::3, ::3, ::3]
    np.testing.assert_array_equal(_phantom.backward_map(params, 0, pts), pts)
    ref = _phantom.backward_map(params, 2, pts)
    assert float(np.abs(ref - pts).max()) > 0.1
    np.testing.assert_allclose(_phantom.forward_map(params, 2, ref), pts, atol=1e-6)


def test_analytic_field_edges(params: _phantom.PhantomParams) -> None:
    """Equal frames give the zero field and bad frames raise.

    :param params: The params fixture.
    :returns: None
    """
    assert not np.any(_phantom.analytic_field(params, 1, 1).data)
    with pytest.raises(ValidationError):
        _phantom.analytic_field(params, 0, 4)


def test_generate_case_layout(
    params: _phantom.PhantomParams, case: _phantom.PhantomCase
) -> None:
    """Frames, phases, labels and identifiers are populated.

    :param params: The params fixture.
    :param case: The case fixture.
    :returns: None
    """
    seq = case.sequence
    assert case.case_id == "nor_3"
    assert case.class_label == "NOR"
    assert len(seq.frames) == 4
    assert (seq.ed_index, seq.es_index) == (0, 2)
    assert seq.labels_ed is case.frame_labels[0]
    assert set(seq.labels_ed.labels()) == {0, 1, 2, 3, 4, 5, 6}
    assert all(f.grid.same_as(params.grid) for f in seq.frames)
    lv_ed = int(seq.labels_ed.mask(_propagation.LV_CAVITY).sum())
    lv_es = int(seq.labels_es.mask(_propagation.LV_CAVITY).sum())
    assert lv_es < lv_ed


def test_generate_case_is_seeded(
    params: _phantom.PhantomParams, case: _phantom.PhantomCase
) -> None:
    """The same seed reproduces the frames and noise differs per frame.

    :param params: The params fixture.
    :param case: The case fixture.
    :returns: None
    """
    again = _phantom.generate_case(params, seed=3, case_id="copy")
    assert again.case_id == "copy"
    frames = case.sequence.frames
    np.testing.assert_array_equal(again.sequence.frames[1].data, frames[1].data)
    other = _phantom.generate_case(params, seed=4)
    assert not np.array_equal(other.sequence.frames[0].data, frames[0].data)


def test_analytic_field_maps_labels(case: _phantom.PhantomCase) -> None:
    """Warping the ED labels with the true field reproduces the ES labels.

    :param case: The case fixture.
    :returns: None
    """
    seq = case.sequence
    field = case.field(seq.ed_index, seq.es_index)
    warped = _volgrid.warp_labels(seq.labels_ed, field)
    scores = _propagation.anatomical_dice(warped, seq.labels_es)
    assert scores["LV"] > 0.85
    assert scores["RV"] > 0.85
    assert scores["MYO"] > 0.7


def test_margin_check() -> None:
    """Anatomy touching the boundary is rejected.

    :returns: None
    """
    params = _phantom.PhantomParams.for_grid(
        (32, 32, 32), (1.5, 1.5, 1.5), frames=3, lv_centre_mm=(5.0, 23.0, 23.0)
    )
    with pytest.raises(ValidationError):
        _phantom.generate_case(params)


def test_translation_pair() -> None:
    """The moving image is the fixed anatomy shifted by the true field.

    :returns: None
    """
    params = _phantom.PhantomParams.for_grid(
        (32, 32, 32), (1.5, 1.5, 1.5), noise_sigma=0.0
    )
    fixed, moving, truth = _phantom.translation_pair(params, (3.0, 0.0, 0.0))
    np.testing.assert_array_equal(truth.data[5, 5, 5], (3.0, 0.0, 0.0))
    np.testing.assert_allclose(
        moving.data[2:, :, :], fixed.data[:-2, :, :], atol=1e-4
    )


@pytest.mark.parametrize(
    ("preset", "attr", "ratio"),
    [
        ("DCM", "lv_inner_radius_mm", 1.4),
        ("DCM", "contraction_amplitude", 0.6),
        ("RV", "rv_radius_mm", 1.5),
        ("RV", "rv_contraction_amplitude", 0.5),
        ("HCM", "wall_thickness_scale", 1.8),
        ("NOR", "lv_inner_radius_mm", 1.0),
    ],
)
def test_apply_preset(preset: str, attr: str, ratio: float) -> None:
    """Presets scale their characteristic parameters.

    :param preset: Class preset.
    :param attr: Parameter to compare.
    :param ratio: Expected ratio to the baseline.
    :returns: None
    """
    base = _phantom.PhantomParams()
    out = _phantom.apply_preset(base, preset)
    assert out.class_preset == preset
    assert getattr(out, attr) == pytest.approx(ratio * getattr(base, attr))


def test_apply_preset_jitter_and_errors() -> None:
    """Jitter stays within 10% and unknown presets raise.

    :returns: None
    """
    base = _phantom.PhantomParams()
    out = _phantom.apply_preset(base, "MINF", np.random.default_rng(0))
    assert out.infarct_weight == 0.5
    assert 0.9 <= out.rv_radius_mm / base.rv_radius_mm <= 1.1
    assert 0.9 <= out.twist_amplitude_rad / base.twist_amplitude_rad <= 1.1
    with pytest.raises(ValidationError):
        _phantom.apply_preset(base, "ABC")


def test_generate_cohort_order() -> None:
    """Cases come ordered by class with zero-padded indices.

    :returns: None
    """
    base = _phantom.PhantomParams.for_grid((40, 40, 40), (1.5, 1.5, 1.5), frames=3)
    cases = _phantom.generate_cohort(1, base, seed=1, classes=("NOR", "HCM"))
    assert [c.case_id for c in cases] == ["nor_000", "hcm_000"]
    assert [c.class_label for c in cases] == ["NOR", "HCM"]
    with pytest.raises(ValidationError):
        _phantom.generate_cohort(0, base)


@pytest.mark.slow
def test_generate_cohort_all_classes() -> None:
    """Every preset renders on a 40³ grid.

    :returns: None
    """
    base = _phantom.PhantomParams.for_grid((40, 40, 40), (1.5, 1.5, 1.5), frames=4)
    cases = _phantom.generate_cohort(2, base, seed=7, max_workers=2)
    assert len(cases) == 10
    assert len({c.case_id for c in cases}) == 10
    assert {c.class_label for c in cases} == set(_types.ACDC_CLASSES)
