"""Cascaded multi-resolution registration with a Neo-Hookean regularizer.

The loss of a displacement ``u`` is

    L(u) = L_sim(fixed, moving o (x + u)) + lam * L_nhe(u)

Stages run coarse to fine. Each stage optimizes a zero-initialized increment
on its own pyramid grid while earlier increments, upsampled to that grid, stay
frozen. Both terms are evaluated on the accumulated field, and the moving
image is always the original (pooled) moving image warped once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

import cardiomech.event as _event
import cardiomech.kinematics as _kinematics
import cardiomech.similarity as _similarity
import cardiomech.types as _types
import cardiomech.volgrid as _volgrid
from cardiomech.errors import NumericalError, ValidationError

_LOGGER = logging.getLogger(__name__)

MIN_COARSE_VOXELS = 8
MAX_HALVINGS = 5
_BETA1 = 0.9
_BETA2 = 0.999
_DAMPING = 0.1
GRADCHECK_FLOOR = 1e-6

Term = Literal["total", "sim", "nhe"]


@dataclass(frozen=True)
class _Evaluation:
    total: float
    sim: float
    nhe: float
    gradient: NDArray[np.float64]


class _Objective:
    """Loss of a displacement on one pyramid grid."""

    def __init__(  # noqa: PLR0913
        self,
        fixed: NDArray[np.float64],
        moving: NDArray[np.float64],
        grid: _types.Grid,
        cfg: _types.RegConfig,
        *,
        term: Term = "total",
        mask: _types.LabelMap3 | None = None,
    ) -> None:
        self.fixed = fixed
        self.moving = moving
        self.grid = grid
        self.cfg = cfg
        self.use_sim = term in ("total", "sim")
        if term == "nhe":
            self.nhe_weight = 1.0
        elif term == "sim":
            self.nhe_weight = 0.0
        else:
            self.nhe_weight = cfg.lam
        self.mask = mask
        self._spacing = np.asarray(grid.spacing)

    def evaluate(
        self, displacement: NDArray[np.float64], *, with_gradient: bool = True
    ) -> _Evaluation:
        grad = np.zeros_like(displacement)
        sim = 0.0
        if self.use_sim:
            coords = _volgrid.sample_coordinates(self.grid, displacement)
            if with_gradient:
                warped, dm = _volgrid.interpolate_with_derivatives(self.moving, coords)
            else:
                warped = _volgrid.interpolate(self.moving, coords)
                dm = None
            sim, g_w = _similarity.similarity_loss_and_gradient(
                self.fixed, warped, self.cfg.sim, with_gradient=with_gradient
            )
            if dm is not None:
                grad += g_w[..., None] * dm / self._spacing
        nhe = 0.0
        if self.nhe_weight > 0.0:
            nhe, g_n = _kinematics.nhe_total_and_gradient(
                displacement,
                self.grid,
                self.cfg.material,
                mask=self.mask,
                with_gradient=with_gradient,
            )
            if with_gradient:
                grad += self.nhe_weight * g_n
        total = sim + self.nhe_weight * nhe
        if not math.isfinite(total):
            _LOGGER.error("non-finite loss (sim=%s, nhe=%s)", sim, nhe)
            raise NumericalError(f"loss is not finite (sim={sim}, nhe={nhe})")
        return _Evaluation(total, sim, nhe, grad)


def _coarsen_mask(
    mask: _types.LabelMap3 | None, grid: _types.Grid, factor: int
) -> _types.LabelMap3 | None:
    if mask is None or factor == 1:
        return mask
    pooled = _volgrid.block_mean(mask.data > 0, factor)
    return _types.LabelMap3(grid, (pooled > 0).astype(np.uint8))


def loss_and_gradient(
    fixed: _types.Volume3,
    moving: _types.Volume3,
    accumulated_field: _types.DisplacementField3,
    increment: _types.DisplacementField3,
    cfg: _types.RegConfig,
) -> tuple[float, _types.DisplacementField3]:
    """Total loss of ``accumulated_field + increment`` and its gradient.

    The gradient is taken with respect to the increment's components, which
    equals the gradient with respect to the accumulated total.

    :param fixed: Fixed image at the stage's scale.
    :param moving: Moving image at the stage's scale.
    :param accumulated_field: Frozen earlier increments on the stage grid.
    :param increment: Current increment on the stage grid.
    :param cfg: Registration settings.
    :returns: ``(loss, gradient)``.
    :raises GridMismatchError: If the inputs live on different grids.
    :raises NumericalError: If the loss is not finite.
    """
    grid = fixed.grid
    grid.require_same(moving.grid, "fixed and moving images")
    grid.require_same(accumulated_field.grid, "images and accumulated field")
    grid.require_same(increment.grid, "images and increment")
    objective = _Objective(
        np.asarray(fixed.data, np.float64),
        np.asarray(moving.data, np.float64),
        grid,
        cfg,
    )
    total = np.asarray(accumulated_field.data, np.float64) + increment.data
    ev = objective.evaluate(total)
    return ev.total, _types.DisplacementField3(grid, ev.gradient)


def _smooth(
    grad: NDArray[np.float64], sigma_vox: NDArray[np.float64]
) -> NDArray[np.float64]:
    if not np.any(sigma_vox > 0):
        return grad
    sigma = tuple(float(s) for s in sigma_vox)
    return np.stack(
        [
            ndimage.gaussian_filter(grad[..., c], sigma=sigma, mode="nearest")
            for c in range(3)
        ],
        axis=-1,
    )


def _optimize_stage(
    objective: _Objective,
    frozen: NDArray[np.float64],
    stage: _types.Stage,
    cfg: _types.RegConfig,
    stage_index: int,
) -> tuple[NDArray[np.float64], _Evaluation, int]:
    """Optimize one zero-initialized increment with monotone adaptive steps."""
    grid = objective.grid
    increment = np.zeros_like(frozen)
    current = objective.evaluate(frozen)
    sigma_vox = cfg.field_smoothing_sigma_mm / np.asarray(grid.spacing)
    m1 = np.zeros_like(increment)
    m2 = np.zeros_like(increment)
    step = stage.step_size
    used = 0
    for it in range(1, stage.iterations + 1):
        g = _smooth(current.gradient, sigma_vox)
        m1 = _BETA1 * m1 + (1.0 - _BETA1) * g
        m2 = _BETA2 * m2 + (1.0 - _BETA2) * g * g
        m1_hat = m1 / (1.0 - _BETA1**it)
        m2_hat = m2 / (1.0 - _BETA2**it)
        rms = math.sqrt(float(np.mean(m2_hat)))
        if rms == 0.0:
            _LOGGER.debug("stage %d: zero gradient at iteration %d", stage_index, it)
            break
        direction = m1_hat / (np.sqrt(m2_hat) + _DAMPING * rms)
        trial: _Evaluation | None = None
        for _ in range(MAX_HALVINGS + 1):
            candidate = increment - step * direction
            ev = objective.evaluate(frozen + candidate)
            if ev.total <= current.total:
                trial = ev
                increment = candidate
                break
            _LOGGER.debug(
                "stage %d iteration %d: rejected step %.4g (%.6g > %.6g)",
                stage_index,
                it,
                step,
                ev.total,
                current.total,
            )
            step *= 0.5
        if trial is None:
            _LOGGER.debug("stage %d: step halving exhausted", stage_index)
            break
        change = abs(current.total - trial.total) / max(abs(current.total), 1e-12)
        current = trial
        used += 1
        _LOGGER.debug(
            "stage %d iteration %d: loss %.6g (sim %.6g, nhe %.6g)",
            stage_index,
            it,
            current.total,
            current.sim,
            current.nhe,
        )
        if change < cfg.convergence_tol:
            break
    return increment, current, used


def _check_coarsest(grid: _types.Grid, cfg: _types.RegConfig) -> None:
    if not cfg.stages:
        return
    coarse = grid.coarsen(cfg.stages[0].scale_factor)
    if min(coarse.dims) < MIN_COARSE_VOXELS:
        raise ValidationError(
            f"coarsest stage grid {coarse.dims} has fewer than "
            f"{MIN_COARSE_VOXELS} voxels per axis"
        )


def fold_fraction(field: _types.DisplacementField3) -> float:
    """Fraction of voxels whose Jacobian determinant is at most zero.

    :param field: Displacement field.
    :returns: Fraction in ``[0, 1]``.
    """
    grad = _kinematics.displacement_gradient(field.data, field.grid.spacing)
    j = np.linalg.det(grad + np.eye(3))
    return float(np.count_nonzero(j <= 0.0)) / field.grid.size


def register(
    fixed: _types.Volume3,
    moving: _types.Volume3,
    cfg: _types.RegConfig | None = None,
    *,
    energy_mask: _types.LabelMap3 | None = None,
    on_event: _event.EventCallback | None = None,
) -> _types.RegResult:
    """Register ``moving`` onto ``fixed``.

    The returned field maps fixed-grid points into the moving image:
    ``warp_volume(moving, result.field)`` resembles ``fixed``.

    :param fixed: Fixed image.
    :param moving: Moving image on the same grid.
    :param cfg: Registration settings; defaults apply when None.
    :param energy_mask: Optional mask restricting the energy mean.
    :param on_event: Optional callback receiving StageCompleted events.
    :returns: Registration result.
    :raises GridMismatchError: If the images live on different grids.
    :raises ValidationError: If the coarsest stage is too small.
    :raises NumericalError: If the loss becomes non-finite.
    """
    cfg = cfg or _types.RegConfig()
    grid = fixed.grid
    grid.require_same(moving.grid, "fixed and moving images")
    if energy_mask is not None:
        grid.require_same(energy_mask.grid, "images and energy mask")
    _check_coarsest(grid, cfg)
    fixed64 = np.asarray(fixed.data, np.float64)
    moving64 = np.asarray(moving.data, np.float64)
    full = _Objective(fixed64, moving64, grid, cfg, mask=energy_mask)
    zero = np.zeros((*grid.dims, 3), dtype=np.float64)
    initial = full.evaluate(zero, with_gradient=False)

    if not cfg.stages:
        _LOGGER.info("no stages configured; returning the zero field")
        return _types.RegResult(
            field=_types.DisplacementField3.zeros(grid),
            per_stage_losses=(),
            fold_fraction=0.0,
            iterations_used=(),
            initial_loss=initial.total,
            final_loss=initial.total,
        )

    increments: list[tuple[_types.Grid, NDArray[np.float64]]] = []
    losses: list[tuple[float, float, float]] = []
    used: list[int] = []
    for index, stage in enumerate(cfg.stages):
        factor = stage.scale_factor
        stage_grid = grid.coarsen(factor)
        frozen = np.zeros((*stage_grid.dims, 3), dtype=np.float64)
        for inc_grid, inc in increments:
            if inc_grid.same_as(stage_grid):
                frozen += inc
            else:
                frozen += _volgrid.resample_components(inc, inc_grid, stage_grid)
        if factor == 1 and increments:
            transferred = full.evaluate(frozen, with_gradient=False)
            if transferred.total > initial.total:
                _LOGGER.warning(
                    "coarse increments raise the full-resolution loss "
                    "(%.6g > %.6g); discarding them",
                    transferred.total,
                    initial.total,
                )
                increments.clear()
                frozen[...] = 0.0
        objective = (
            full
            if factor == 1
            else _Objective(
                _volgrid.block_mean(fixed64, factor),
                _volgrid.block_mean(moving64, factor),
                stage_grid,
                cfg,
                mask=_coarsen_mask(energy_mask, stage_grid, factor),
            )
        )
        _LOGGER.info(
            "stage %d: factor %d, grid %s, %d iterations",
            index,
            factor,
            stage_grid.dims,
            stage.iterations,
        )
        increment, final, n_used = _optimize_stage(objective, frozen, stage, cfg, index)
        increments.append((stage_grid, increment))
        losses.append((final.sim, final.nhe, final.total))
        used.append(n_used)
        _LOGGER.info(
            "stage %d done after %d iteration(s): loss %.6g", index, n_used, final.total
        )
        _event.safe_emit(
            on_event,
            _event.StageCompleted(
                stage_index=index,
                scale_factor=factor,
                iterations_used=n_used,
                sim_loss=final.sim,
                nhe_loss=final.nhe,
                total_loss=final.total,
            ),
        )

    total = np.zeros((*grid.dims, 3), dtype=np.float64)
    for inc_grid, inc in increments:
        if inc_grid.same_as(grid):
            total += inc
        else:
            total += _volgrid.resample_components(inc, inc_grid, grid)
    field = _types.DisplacementField3(grid, total)
    final_eval = full.evaluate(np.asarray(field.data, np.float64), with_gradient=False)
    return _types.RegResult(
        field=field,
        per_stage_losses=tuple(losses),
        fold_fraction=fold_fraction(field),
        iterations_used=tuple(used),
        initial_loss=initial.total,
        final_loss=final_eval.total,
    )


def register_pair_bidirectional(
    frame_a: _types.Volume3,
    frame_b: _types.Volume3,
    cfg: _types.RegConfig | None = None,
) -> tuple[_types.RegResult, _types.RegResult]:
    """Register two frames in both directions.

    :param frame_a: First frame (for example ED).
    :param frame_b: Second frame (for example ES).
    :param cfg: Registration settings.
    :returns: ``(a_to_b, b_to_a)``; ``a_to_b`` has ``frame_b`` fixed and
        warps ``frame_a`` onto it.
    """
    return register(frame_b, frame_a, cfg), register(frame_a, frame_b, cfg)


def _smooth_texture(
    rng: np.random.Generator, dims: tuple[int, int, int], sigma: float
) -> NDArray[np.float64]:
    tex = ndimage.gaussian_filter(rng.standard_normal(dims), sigma=sigma, mode="wrap")
    return (tex - tex.mean()) / tex.std()


def _probe_field(
    rng: np.random.Generator, grid: _types.Grid, kind: str
) -> NDArray[np.float64]:
    if kind == "zero":
        return np.zeros((*grid.dims, 3))
    if kind == "linear":
        a = rng.uniform(-0.05, 0.05, size=(3, 3))
        return np.einsum("ij,...j->...i", a, grid.physical_points())
    if kind == "random":
        raw = rng.standard_normal((*grid.dims, 3))
        smooth = np.stack(
            [ndimage.gaussian_filter(raw[..., c], sigma=1.0) for c in range(3)], axis=-1
        )
        return 0.3 * smooth / max(float(np.abs(smooth).max()), 1e-12)
    raise ValidationError(f"unknown field kind {kind!r}")


def gradient_check(  # noqa: PLR0913
    cfg: _types.RegConfig | None = None,
    grid_size: int = 12,
    probes: int = 50,
    eps: float = 1e-3,
    *,
    term: Term = "total",
    field_kind: Literal["random", "linear", "zero"] = "random",
    identical_images: bool = False,
) -> float:
    """Compare the analytic gradient against central finite differences.

    Smooth seeded textures are registered on a ``grid_size³`` grid with unit
    spacing. Components whose sample position lies within ``2·eps`` of a
    trilinear cell face are skipped for terms involving the similarity, since
    the interpolant is not differentiable there.

    :param cfg: Registration settings (loss weights, similarity, seed).
    :param grid_size: Edge length of the test grid, between 3 and 16.
    :param probes: Number of probed components.
    :param eps: Finite-difference step in mm.
    :param term: ``total``, ``sim`` or ``nhe``.
    :param field_kind: Displacement at which the gradient is checked.
    :param identical_images: Use the same texture as fixed and moving image.
    :returns: Maximum relative error over the probes. Each probe is measured
        against the larger of its two magnitudes; probes where both lie below
        ``GRADCHECK_FLOOR`` agree by definition.
    :raises ValidationError: On out-of-range arguments.
    """
    cfg = cfg or _types.RegConfig()
    if not 3 <= grid_size <= 16:  # noqa: PLR2004
        raise ValidationError(f"grid_size must lie in 3..16, got {grid_size}")
    if probes < 1 or not eps > 0:
        raise ValidationError("probes must be >= 1 and eps > 0")
    rng = np.random.default_rng(cfg.seed)
    grid = _types.Grid((grid_size, grid_size, grid_size), (1.0, 1.0, 1.0))
    fixed = _smooth_texture(rng, grid.dims, 1.5)
    moving = (
        fixed.copy()
        if identical_images
        else 0.7 * fixed + 0.3 * _smooth_texture(rng, grid.dims, 1.5)
    )
    objective = _Objective(fixed, moving, grid, cfg, term=term)
    u = _probe_field(rng, grid, field_kind)
    analytic = objective.evaluate(u).gradient
    coords = _volgrid.sample_coordinates(grid, u)
    margin = 2.0 * eps

    worst = 0.0
    checked = 0
    for flat in rng.permutation(analytic.size):
        if checked >= probes:
            break
        idx = np.unravel_index(int(flat), analytic.shape)
        if objective.use_sim:
            c = coords[idx]
            if abs(c - round(c)) < margin:
                continue
        plus = u.copy()
        plus[idx] += eps
        minus = u.copy()
        minus[idx] -= eps
        fd = (
            objective.evaluate(plus, with_gradient=False).total
            - objective.evaluate(minus, with_gradient=False).total
        ) / (2.0 * eps)
        a = float(analytic[idx])
        scale = max(abs(a), abs(fd))
        err = abs(a - fd) / scale if scale >= GRADCHECK_FLOOR else 0.0
        worst = max(worst, err)
        checked += 1
    _LOGGER.info(
        "gradient check (%s, %s field): %d probe(s), max relative error %.3g",
        term,
        field_kind,
        checked,
        worst,
    )
    return worst


__all__ = [
    "GRADCHECK_FLOOR",
    "MAX_HALVINGS",
    "MIN_COARSE_VOXELS",
    "fold_fraction",
    "gradient_check",
    "loss_and_gradient",
    "register",
    "register_pair_bidirectional",
]
