"""Finite-strain kinematics and Neo-Hookean energy densities.

The deformation gradient is ``F = I + grad(u)`` with ``F[..., i, j] =
delta_ij + du_i/dx_j``, evaluated by central differences in mm with one-sided
differences on boundary planes. The energy density is

    phi = (mu / 2) * (I1 * max(J, j_floor) ** (-2/3) - 3) + (kappa / 2) * (J - 1) ** 2

with ``I1 = tr(F^T F)`` and ``J = det(F)``.
"""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from numpy.typing import NDArray

import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

DEFAULT_J_FLOOR = 1e-6


def _check_floor(j_floor: float) -> None:
    if not j_floor > 0:
        raise ValidationError(f"j_floor must be > 0, got {j_floor}")


def displacement_gradient(
    displacement: NDArray[np.floating], spacing: tuple[float, float, float]
) -> NDArray[np.float64]:
    """Return ``du_i/dx_j`` for a raw displacement array.

    :param displacement: Displacement in mm, shape ``(nx, ny, nz, 3)``.
    :param spacing: Voxel size in mm.
    :returns: Array of shape ``(nx, ny, nz, 3, 3)``.
    :raises ValidationError: If an axis has fewer than 3 voxels.
    """
    u = np.asarray(displacement, dtype=np.float64)
    if min(u.shape[:3]) < 3:  # noqa: PLR2004
        raise ValidationError(
            f"deformation gradient needs >= 3 voxels per axis, got {u.shape[:3]}"
        )
    grad = np.empty((*u.shape[:3], 3, 3), dtype=np.float64)
    for i in range(3):
        parts = np.gradient(u[..., i], *spacing, edge_order=1)
        for j in range(3):
            grad[..., i, j] = parts[j]
    return grad


def gradient_adjoint(
    g: NDArray[np.float64], spacing: tuple[float, float, float]
) -> NDArray[np.float64]:
    """Apply the transpose of :func:`displacement_gradient`.

    :param g: Sensitivities with respect to ``du_i/dx_j``, shape
        ``(nx, ny, nz, 3, 3)``.
    :param spacing: Voxel size in mm.
    :returns: Sensitivities with respect to ``u``, shape ``(nx, ny, nz, 3)``.
    """
    out = np.zeros((*g.shape[:3], 3), dtype=np.float64)
    for j in range(3):
        h = spacing[j]
        comp = np.moveaxis(g[..., :, j], j, 0)
        acc = np.zeros_like(comp)
        inner = comp[1:-1] / (2.0 * h)
        acc[2:] += inner
        acc[:-2] -= inner
        acc[0] -= comp[0] / h
        acc[1] += comp[0] / h
        acc[-1] += comp[-1] / h
        acc[-2] -= comp[-1] / h
        out += np.moveaxis(acc, 0, j)
    return out


def deformation_gradient(field: _types.DisplacementField3) -> _types.TensorField3:
    """Compute ``F = I + grad(u)`` for a displacement field.

    :param field: Displacement field.
    :returns: Deformation gradient per voxel.
    :raises ValidationError: If an axis has fewer than 3 voxels.
    """
    grad = displacement_gradient(field.data, field.grid.spacing)
    return _types.TensorField3(field.grid, grad + np.eye(3))


def cauchy_green(
    F: _types.TensorField3,
    side: Literal["left", "right"] = "right",
) -> _types.TensorField3:
    """Compute the right (``C = F^T F``) or left (``B = F F^T``) tensor.

    :param F: Deformation gradient.
    :param side: ``right`` for C, ``left`` for B.
    :returns: Symmetric tensor field.
    :raises ValidationError: For an unknown side.
    """
    if side == "right":
        out = np.einsum("...ki,...kj->...ij", F.data, F.data)
    elif side == "left":
        out = np.einsum("...ik,...jk->...ij", F.data, F.data)
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return _types.TensorField3(F.grid, out)


def invariants(
    C: _types.TensorField3,
) -> tuple[_types.Volume3, _types.Volume3, _types.Volume3]:
    """Return the principal invariants ``(I1, I2, I3)`` of a tensor field.

    :param C: Tensor field, usually a Cauchy-Green tensor.
    :returns: Trace, second invariant and determinant maps.
    """
    c = C.data
    i1 = np.trace(c, axis1=-2, axis2=-1)
    c2 = np.einsum("...ik,...kj->...ij", c, c)
    i2 = 0.5 * (i1**2 - np.trace(c2, axis1=-2, axis2=-1))
    i3 = np.linalg.det(c)
    grid = C.grid
    return _types.Volume3(grid, i1), _types.Volume3(grid, i2), _types.Volume3(grid, i3)


def jacobian_det(F: _types.TensorField3) -> _types.Volume3:
    """Return ``J = det(F)`` per voxel; negative values indicate folding.

    :param F: Deformation gradient.
    :returns: Determinant map.
    """
    return _types.Volume3(F.grid, np.linalg.det(F.data))


def deviatoric_gradient(
    F: _types.TensorField3,
    j_floor: float = DEFAULT_J_FLOOR,
) -> _types.TensorField3:
    """Return the volume-preserving part ``J^(-1/3) F`` (J floored).

    :param F: Deformation gradient.
    :param j_floor: Lower bound applied to J.
    :returns: Deviatoric deformation gradient.
    :raises ValidationError: If j_floor is not positive.
    """
    _check_floor(j_floor)
    j = np.maximum(np.linalg.det(F.data), j_floor)
    return _types.TensorField3(F.grid, F.data * j[..., None, None] ** (-1.0 / 3.0))


def deviatoric_invariant(
    F: _types.TensorField3,
    j_floor: float = DEFAULT_J_FLOOR,
) -> _types.Volume3:
    """Return the first deviatoric invariant ``tr(C) J^(-2/3)`` (J floored).

    :param F: Deformation gradient.
    :param j_floor: Lower bound applied to J.
    :returns: Invariant map.
    :raises ValidationError: If j_floor is not positive.
    """
    _check_floor(j_floor)
    i1 = np.einsum("...ij,...ij->...", F.data, F.data)
    j = np.maximum(np.linalg.det(F.data), j_floor)
    return _types.Volume3(F.grid, i1 * j ** (-2.0 / 3.0))


def _densities(
    f: NDArray[np.float64], j_floor: float
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Return ``(phi_dis, phi_vol, J)`` for raw deformation gradients."""
    i1 = np.einsum("...ij,...ij->...", f, f)
    j = np.linalg.det(f)
    phi_dis = i1 * np.maximum(j, j_floor) ** (-2.0 / 3.0) - 3.0
    phi_vol = (j - 1.0) ** 2
    return phi_dis, phi_vol, j


def nhe_density(
    F: _types.TensorField3,
    mat: _types.MaterialParams,
    j_floor: float = DEFAULT_J_FLOOR,
) -> _types.EnergyMaps:
    """Evaluate the Neo-Hookean energy densities per voxel.

    :param F: Deformation gradient.
    :param mat: Material constants.
    :param j_floor: Lower bound on J inside the ``J^(-2/3)`` term.
    :returns: Distortional, volumetric and total densities plus fold count.
    :raises ValidationError: If j_floor is not positive.
    """
    _check_floor(j_floor)
    phi_dis, phi_vol, j = _densities(F.data, j_floor)
    phi = 0.5 * mat.mu * phi_dis + 0.5 * mat.kappa * phi_vol
    folds = int(np.count_nonzero(j <= j_floor))
    if folds:
        _LOGGER.warning("%d voxel(s) with J <= %g", folds, j_floor)
    grid = F.grid
    return _types.EnergyMaps(
        phi_dis=_types.Volume3(grid, phi_dis),
        phi_vol=_types.Volume3(grid, phi_vol),
        phi=_types.Volume3(grid, phi),
        fold_count=folds,
    )


def _mask_weights(
    mask: _types.LabelMap3 | None, dims: tuple[int, int, int]
) -> NDArray[np.float64]:
    if mask is None:
        return np.full(dims, 1.0 / float(np.prod(dims)))
    m = (mask.data > 0).astype(np.float64)
    count = m.sum()
    if count == 0:
        raise ValidationError("energy mask selects no voxel")
    return m / count


def nhe_total(
    field: _types.DisplacementField3,
    mat: _types.MaterialParams,
    mask: _types.LabelMap3 | None = None,
    j_floor: float = DEFAULT_J_FLOOR,
) -> float:
    """Mean Neo-Hookean energy density of a field in kPa.

    :param field: Displacement field.
    :param mat: Material constants.
    :param mask: Optional mask; when given the mean runs over nonzero voxels.
    :param j_floor: Lower bound on J inside the ``J^(-2/3)`` term.
    :returns: Mean energy density.
    :raises ValidationError: If the grid is too small or the mask is empty.
    """
    value, _ = nhe_total_and_gradient(
        field.data, field.grid, mat, mask=mask, j_floor=j_floor, with_gradient=False
    )
    return value


def _cofactor(f: NDArray[np.float64]) -> NDArray[np.float64]:
    r0, r1, r2 = f[..., 0, :], f[..., 1, :], f[..., 2, :]
    return np.stack(
        [np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2
    )


def nhe_total_and_gradient(  # noqa: PLR0913
    displacement: NDArray[np.floating],
    grid: _types.Grid,
    mat: _types.MaterialParams,
    *,
    mask: _types.LabelMap3 | None = None,
    j_floor: float = DEFAULT_J_FLOOR,
    with_gradient: bool = True,
) -> tuple[float, NDArray[np.float64]]:
    """Mean energy density and its gradient with respect to the displacement.

    The first Piola stress ``P = d(phi)/dF`` is pulled back through the
    finite-difference operator with :func:`gradient_adjoint`.

    :param displacement: Displacement in mm, shape ``grid.dims + (3,)``.
    :param grid: Grid of the displacement.
    :param mat: Material constants.
    :param mask: Optional averaging mask.
    :param j_floor: Lower bound on J inside the ``J^(-2/3)`` term.
    :param with_gradient: When False an empty gradient is returned.
    :returns: ``(mean energy, gradient)``.
    :raises ValidationError: If the grid is too small or the mask is empty.
    """
    _check_floor(j_floor)
    f = displacement_gradient(displacement, grid.spacing) + np.eye(3)
    phi_dis, phi_vol, j = _densities(f, j_floor)
    phi = 0.5 * mat.mu * phi_dis + 0.5 * mat.kappa * phi_vol
    weights = _mask_weights(mask, grid.dims)
    value = float(np.sum(weights * phi))
    if not with_gradient:
        return value, np.empty((0,), dtype=np.float64)

    cof = _cofactor(f)
    i1_dev = phi_dis + 3.0
    jc = np.maximum(j, j_floor)
    active = (j > j_floor).astype(np.float64)
    dis_scale = jc ** (-2.0 / 3.0)
    dis_j = -(2.0 / 3.0) * i1_dev / jc * active
    stress = 0.5 * mat.mu * (
        2.0 * f * dis_scale[..., None, None] + dis_j[..., None, None] * cof
    ) + (mat.kappa * (j - 1.0))[..., None, None] * cof
    grad = gradient_adjoint(stress * weights[..., None, None], grid.spacing)
    return value, grad


__all__ = [
    "DEFAULT_J_FLOOR",
    "cauchy_green",
    "deformation_gradient",
    "deviatoric_gradient",
    "deviatoric_invariant",
    "displacement_gradient",
    "gradient_adjoint",
    "invariants",
    "jacobian_det",
    "nhe_density",
    "nhe_total",
    "nhe_total_and_gradient",
]
