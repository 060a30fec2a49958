"""Unit tests for cardiomech.registration module."""

import itertools
import logging
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np
import pytest
from numpy.typing import NDArray
from scipy import ndimage

import cardiomech.event as _event
import cardiomech.kinematics as _kinematics
import cardiomech.phantom as _phantom
import cardiomech.registration as _registration
import cardiomech.similarity as _similarity
import cardiomech.types as _types
import cardiomech.volgrid as _volgrid
from cardiomech.errors import GridMismatchError, ValidationError

SMALL_STAGES = (_types.Stage(2, 15, 0.5), _types.Stage(1, 15, 0.25))


@pytest.fixture
def grid() -> _types.Grid:
    """Fixture to provide a 24³ grid with unit spacing.

    :returns: The grid.
    """
    return _types.Grid((24, 24, 24), (1.0, 1.0, 1.0))


@pytest.fixture
def texture(grid: _types.Grid) -> _types.Volume3:
    """Fixture to provide a smooth, periodic, normalized texture.

    :param grid: The grid fixture.
    :returns: Texture volume.
    """
    rng = np.random.default_rng(21)
    tex = ndimage.gaussian_filter(rng.standard_normal(grid.dims), 2.0, mode="wrap")
    return _types.Volume3(grid, (tex - tex.mean()) / tex.std())


@pytest.fixture
def shifted(texture: _types.Volume3) -> _types.Volume3:
    """Fixture to provide the texture moved one voxel along +x.

    :param texture: The texture fixture.
    :returns: Volume equal to ``texture(x - 1)``.
    """
    return _types.Volume3(texture.grid, np.roll(texture.data, 1, axis=0))


@pytest.mark.parametrize("term", ["nhe", "sim", "total"])
def test_gradient_check(term: _registration.Term) -> None:
    """Analytic gradients agree with finite differences for each term.

    :param term: Loss term under test.
    :returns: None
    """
    assert _registration.gradient_check(probes=50, term=term) < 1e-3


def test_gradient_check_linear_field() -> None:
    """The regularizer gradient is exact on an affine displacement.

    :returns: None
    """
    err = _registration.gradient_check(probes=50, term="nhe", field_kind="linear")
    assert err < 1e-4


def test_gradient_check_at_rest() -> None:
    """Identical images at the zero field pass; negligible components agree.

    :returns: None
    """
    err = _registration.gradient_check(field_kind="zero", identical_images=True)
    assert err < 1e-3


class _LinearObjective:
    """Loss ``sum(c * u)`` whose reported gradient doubles the small weights."""

    use_sim = False

    def __init__(self, *args: object, **kwargs: object) -> None:
        del args, kwargs
        self.weights = np.full((12, 12, 12, 3), 1e-5)
        self.weights[0, 0, 0, 0] = 1.0

    def evaluate(
        self, displacement: NDArray[np.float64], *, with_gradient: bool = True
    ) -> SimpleNamespace:
        del with_gradient
        gradient = np.where(self.weights < 1.0, 2.0 * self.weights, self.weights)
        total = float(np.sum(self.weights * displacement))
        return SimpleNamespace(total=total, gradient=gradient)


def test_gradient_check_flags_small_components() -> None:
    """A wrong gradient is caught even where it is tiny next to the largest.

    :returns: None
    """
    with patch.object(_registration, "_Objective", _LinearObjective):
        err = _registration.gradient_check(probes=50, term="nhe")
    assert err == pytest.approx(0.5)


def test_gradient_check_arguments() -> None:
    """Out-of-range arguments are rejected.

    :returns: None
    """
    with pytest.raises(ValidationError):
        _registration.gradient_check(grid_size=2)
    with pytest.raises(ValidationError):
        _registration.gradient_check(grid_size=17)
    with pytest.raises(ValidationError):
        _registration.gradient_check(probes=0)
    with pytest.raises(ValidationError):
        _registration.gradient_check(field_kind="bogus")  # type: ignore[arg-type]


def test_loss_and_gradient_splits_total(
    texture: _types.Volume3, shifted: _types.Volume3
) -> None:
    """Only the sum of the accumulated field and the increment matters.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(lam=0.5)
    grid = texture.grid
    acc = _types.DisplacementField3.constant(grid, (0.5, 0.0, 0.25))
    inc = _types.DisplacementField3.constant(grid, (0.25, -0.5, 0.0))
    total = _types.DisplacementField3.constant(grid, (0.75, -0.5, 0.25))
    zero = _types.DisplacementField3.zeros(grid)
    loss_a, grad_a = _registration.loss_and_gradient(texture, shifted, acc, inc, cfg)
    loss_b, grad_b = _registration.loss_and_gradient(
        texture, shifted, total, zero, cfg
    )
    assert loss_a == pytest.approx(loss_b, rel=1e-9)
    np.testing.assert_allclose(grad_a.data, grad_b.data, rtol=1e-6, atol=1e-9)


def test_loss_and_gradient_without_regularizer(
    texture: _types.Volume3, shifted: _types.Volume3
) -> None:
    """With lambda 0 the loss is the similarity of the warped image.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(lam=0.0)
    grid = texture.grid
    field = _types.DisplacementField3.constant(grid, (0.5, 0.0, 0.0))
    loss, _ = _registration.loss_and_gradient(
        texture, shifted, field, _types.DisplacementField3.zeros(grid), cfg
    )
    warped = _volgrid.warp_volume(shifted, field)
    expected = _similarity.similarity_loss(texture, warped, cfg.sim)
    assert loss == pytest.approx(expected, abs=1e-6)


def test_loss_and_gradient_grid_mismatch(texture: _types.Volume3) -> None:
    """Inputs on different grids raise GridMismatchError.

    :param texture: The texture fixture.
    :returns: None
    """
    other = _types.Grid((24, 24, 24), (2.0, 1.0, 1.0))
    zero = _types.DisplacementField3.zeros(texture.grid)
    with pytest.raises(GridMismatchError):
        _registration.loss_and_gradient(
            texture,
            texture,
            _types.DisplacementField3.zeros(other),
            zero,
            _types.RegConfig(),
        )


def test_fold_fraction(grid: _types.Grid) -> None:
    """Identity has no folds and a reflection folds every voxel.

    :param grid: The grid fixture.
    :returns: None
    """
    assert _registration.fold_fraction(_types.DisplacementField3.zeros(grid)) == 0.0
    data = np.zeros((*grid.dims, 3))
    data[..., 0] = -2.0 * grid.physical_points()[..., 0]
    flipped = _types.DisplacementField3(grid, data)
    assert _registration.fold_fraction(flipped) == 1.0


def test_register_without_stages(
    texture: _types.Volume3, shifted: _types.Volume3
) -> None:
    """An empty cascade returns the zero field and the initial loss.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(stages=())
    result = _registration.register(texture, shifted, cfg)
    assert not np.any(result.field.data)
    assert result.per_stage_losses == ()
    assert result.final_loss == result.initial_loss
    expected = _similarity.similarity_loss(texture, shifted, cfg.sim)
    assert result.initial_loss == pytest.approx(expected, abs=1e-6)


def test_register_rejects_small_coarse_grid(texture: _types.Volume3) -> None:
    """A coarsest stage below the minimum size raises ValidationError.

    :param texture: The texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(stages=(_types.Stage(4, 5, 0.1), _types.Stage(1, 5, 0.1)))
    with pytest.raises(ValidationError):
        _registration.register(texture, texture, cfg)


def test_register_grid_mismatch(texture: _types.Volume3) -> None:
    """Images on different grids raise GridMismatchError.

    :param texture: The texture fixture.
    :returns: None
    """
    other = _types.Volume3.full(_types.Grid((24, 24, 24), (1.0, 1.0, 2.0)), 0.0)
    with pytest.raises(GridMismatchError):
        _registration.register(texture, other, _types.RegConfig(stages=SMALL_STAGES))


def test_register_self_stays_at_rest(texture: _types.Volume3) -> None:
    """Registering an image to itself leaves the field near zero.

    :param texture: The texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(stages=SMALL_STAGES)
    result = _registration.register(texture, texture, cfg)
    assert float(np.abs(result.field.data).max()) < 0.5
    assert result.final_loss <= result.initial_loss + 1e-6
    assert result.fold_fraction == 0.0


def test_register_shift_reduces_loss(
    texture: _types.Volume3, shifted: _types.Volume3
) -> None:
    """A one-voxel shift is partly recovered and the loss decreases.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :returns: None
    """
    events: list[_event.PipelineEvent] = []
    cfg = _types.RegConfig(stages=SMALL_STAGES, lam=0.01)
    result = _registration.register(texture, shifted, cfg, on_event=events.append)
    assert result.final_loss < result.initial_loss
    interior = result.field.data[4:-4, 4:-4, 4:-4, 0]
    assert float(interior.mean()) > 0.0
    assert len(result.per_stage_losses) == 2
    assert len(result.iterations_used) == 2

    stages = [e for e in events if isinstance(e, _event.StageCompleted)]
    assert [e.stage_index for e in stages] == [0, 1]
    assert [e.scale_factor for e in stages] == [2, 1]
    assert stages[-1].total_loss == pytest.approx(
        result.per_stage_losses[-1][2], rel=1e-9
    )


def test_register_accepted_losses_never_rise(
    texture: _types.Volume3, shifted: _types.Volume3, caplog: pytest.LogCaptureFixture
) -> None:
    """Within every stage the accepted loss sequence is non-increasing.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :param caplog: Pytest fixture to capture log output.
    :returns: None
    """
    cfg = _types.RegConfig(stages=SMALL_STAGES, lam=0.1)
    with caplog.at_level(logging.DEBUG, logger="cardiomech.registration"):
        result = _registration.register(texture, shifted, cfg)
    accepted: dict[int, list[float]] = {0: [], 1: []}
    for record in caplog.records:
        if record.msg == "stage %d iteration %d: loss %.6g (sim %.6g, nhe %.6g)":
            assert isinstance(record.args, tuple)
            stage, _, loss = record.args[:3]
            assert isinstance(stage, int)
            assert isinstance(loss, float)
            accepted[stage].append(loss)
    for index, losses in accepted.items():
        assert len(losses) == result.iterations_used[index]
        assert np.all(np.diff(losses) <= 0.0)
    assert accepted[0]
    assert accepted[0][-1] == result.per_stage_losses[0][2]


def test_register_is_deterministic(
    texture: _types.Volume3, shifted: _types.Volume3
) -> None:
    """Two runs with the same inputs and seed agree bit for bit.

    :param texture: The texture fixture.
    :param shifted: The shifted texture fixture.
    :returns: None
    """
    cfg = _types.RegConfig(stages=SMALL_STAGES, lam=0.05, seed=3)
    first = _registration.register(texture, shifted, cfg)
    second = _registration.register(texture, shifted, cfg)
    np.testing.assert_array_equal(first.field.data, second.field.data)
    assert first.per_stage_losses == second.per_stage_losses
    assert first.iterations_used == second.iterations_used
    assert first.fold_fraction == second.fold_fraction
    assert first.initial_loss == second.initial_loss
    assert first.final_loss == second.final_loss


def test_register_energy_mask_grid(texture: _types.Volume3) -> None:
    """An energy mask on another grid is rejected.

    :param texture: The texture fixture.
    :returns: None
    """
    mask = _types.LabelMap3(
        _types.Grid((24, 24, 24), (1.0, 2.0, 1.0)), np.ones((24, 24, 24))
    )
    with pytest.raises(GridMismatchError):
        _registration.register(
            texture,
            texture,
            _types.RegConfig(stages=SMALL_STAGES),
            energy_mask=mask,
        )


def test_register_pair_bidirectional_order(texture: _types.Volume3) -> None:
    """The first result has the second frame fixed.

    :param texture: The texture fixture.
    :returns: None
    """
    other = _types.Volume3.full(texture.grid, 1.0)
    with patch.object(_registration, "register") as mock_register:
        mock_register.side_effect = ["a_to_b", "b_to_a"]
        out = _registration.register_pair_bidirectional(texture, other)
    assert out == ("a_to_b", "b_to_a")
    first, second = mock_register.call_args_list
    assert first.args[0] is other
    assert first.args[1] is texture
    assert second.args[0] is texture
    assert second.args[1] is other


@pytest.mark.slow
def test_register_recovers_phantom_translation() -> None:
    """A 2-voxel shift of the phantom is recovered inside the heart.

    :returns: None
    """
    params = _phantom.PhantomParams.for_grid((40, 40, 40), (1.5, 1.5, 1.5))
    fixed, moving, truth = _phantom.translation_pair(params, (3.0, 0.0, 0.0), seed=4)
    result = _registration.register(fixed, moving, _types.RegConfig(lam=0.05))
    foreground = fixed.data > _phantom.INTENSITY_MYOCARDIUM - 0.05
    error = np.linalg.norm(result.field.data - truth.data, axis=-1)[foreground]
    assert float(error.mean()) < 0.75
    assert result.fold_fraction < 0.01


@pytest.mark.slow
def test_register_phantom_cycle() -> None:
    """ED to ES registration warps the ED labels onto the ES labels.

    :returns: None
    """
    params = _phantom.PhantomParams.for_grid((40, 40, 40), (1.5, 1.5, 1.5), frames=6)
    case = _phantom.generate_case(params, seed=2)
    seq = case.sequence
    result = _registration.register(
        seq.frames[seq.ed_index], seq.frames[seq.es_index], _types.RegConfig()
    )
    assert result.fold_fraction < 0.01
    assert result.final_loss < result.initial_loss


@pytest.mark.slow
def test_register_energy_falls_with_lambda() -> None:
    """A stronger regularizer never yields a field with more strain energy.

    :returns: None
    """
    params = _phantom.PhantomParams.for_grid((32, 32, 32), (1.5, 1.5, 1.5), frames=4)
    seq = _phantom.generate_case(params, seed=5).sequence
    fixed, moving = seq.frames[seq.es_index], seq.frames[seq.ed_index]
    stages = (_types.Stage(2, 40, 0.5), _types.Stage(1, 30, 0.25))
    energies: list[float] = []
    for lam in (0.0, 0.01, 0.1, 1.0):
        cfg = _types.RegConfig(stages=stages, lam=lam, seed=0)
        result = _registration.register(fixed, moving, cfg)
        energies.append(_kinematics.nhe_total(result.field, cfg.material))
    for weaker, stronger in itertools.pairwise(energies):
        assert stronger <= weaker
