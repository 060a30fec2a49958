"""Temporal field averaging and voxel-wise modulus estimation.

Local moduli rescale the global material constants by how much energy a voxel
stores relative to its neighbourhood:

    mu(p)    = mu    * mean_window(phi_dis) / phi_dis(p)
    kappa(p) = kappa * mean_window(phi_vol) / phi_vol(p)

Where the voxel's own density does not exceed the energy floor the global
constant is reported and the voxel is marked invalid.
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray

import cardiomech.kinematics as _kinematics
import cardiomech.registration as _registration
import cardiomech.similarity as _similarity
import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

DEFAULT_ENERGY_FLOOR = 1e-8


def temporal_mean_field(
    f_prev: _types.DisplacementField3, f_next: _types.DisplacementField3
) -> _types.DisplacementField3:
    """Voxelwise average of two displacement fields.

    :param f_prev: Field estimated against the preceding frame.
    :param f_next: Field estimated against the following frame.
    :returns: The average field.
    :raises GridMismatchError: If the grids differ.
    """
    f_prev.grid.require_same(f_next.grid, "temporal fields")
    mean = 0.5 * (
        np.asarray(f_prev.data, np.float64) + np.asarray(f_next.data, np.float64)
    )
    return _types.DisplacementField3(f_prev.grid, mean)


def window_mean(data: NDArray[np.floating], window: int) -> NDArray[np.float64]:
    """Mean over a cubic window truncated at the volume boundary.

    :param data: Scalar array.
    :param window: Odd window edge length.
    :returns: Windowed means.
    """
    arr = np.asarray(data, dtype=np.float64)
    return _similarity.box_sum(arr, window) / _similarity.box_sum(
        np.ones_like(arr), window
    )


def _ratio(
    density: NDArray[np.float64], window: int, modulus: float, floor: float
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    valid = density > floor
    mean = window_mean(density, window)
    out = np.full(density.shape, modulus, dtype=np.float64)
    np.divide(modulus * mean, density, out=out, where=valid)
    return out, valid


def moduli_from_energy(
    energy: _types.EnergyMaps,
    mat: _types.MaterialParams,
    window: int = 5,
    energy_floor: float = DEFAULT_ENERGY_FLOOR,
) -> _types.ModuliMaps:
    """Estimate local moduli from precomputed energy densities.

    :param energy: Energy densities of the phase field.
    :param mat: Global material constants.
    :param window: Odd window edge length.
    :param energy_floor: Minimum density for a valid estimate.
    :returns: Moduli maps and validity masks.
    :raises ValidationError: On an invalid window or floor.
    """
    if window < 3 or window % 2 == 0:  # noqa: PLR2004
        raise ValidationError(f"moduli window must be odd and >= 3, got {window}")
    if not energy_floor > 0:
        raise ValidationError(f"energy_floor must be > 0, got {energy_floor}")
    grid = energy.phi.grid
    mu_map, mu_valid = _ratio(
        np.asarray(energy.phi_dis.data, np.float64), window, mat.mu, energy_floor
    )
    kappa_map, kappa_valid = _ratio(
        np.asarray(energy.phi_vol.data, np.float64), window, mat.kappa, energy_floor
    )
    invalid = int(np.count_nonzero(~(mu_valid & kappa_valid)))
    _LOGGER.debug("%d of %d voxel(s) below the energy floor", invalid, grid.size)
    return _types.ModuliMaps(
        mu_map=_types.Volume3(grid, mu_map),
        kappa_map=_types.Volume3(grid, kappa_map),
        validity_mask=_types.LabelMap3(grid, (mu_valid & kappa_valid).astype(np.uint8)),
        mu_valid=_types.LabelMap3(grid, mu_valid.astype(np.uint8)),
        kappa_valid=_types.LabelMap3(grid, kappa_valid.astype(np.uint8)),
    )


def energy_maps(
    field: _types.DisplacementField3, mat: _types.MaterialParams
) -> _types.EnergyMaps:
    """Neo-Hookean densities of a displacement field.

    :param field: Displacement field.
    :param mat: Material constants.
    :returns: Energy maps.
    """
    return _kinematics.nhe_density(_kinematics.deformation_gradient(field), mat)


def local_moduli(
    field: _types.DisplacementField3,
    mat: _types.MaterialParams,
    window: int = 5,
    energy_floor: float = DEFAULT_ENERGY_FLOOR,
) -> _types.ModuliMaps:
    """Voxel-wise shear and bulk moduli of a displacement field.

    :param field: Phase displacement field.
    :param mat: Global material constants.
    :param window: Odd window edge length.
    :param energy_floor: Minimum density for a valid estimate.
    :returns: Moduli maps and validity masks.
    :raises ValidationError: On an invalid window or floor.
    """
    return moduli_from_energy(energy_maps(field, mat), mat, window, energy_floor)


def phase_field(
    seq: _types.CineSequence,
    phase: _types.Phase,
    cfg: _types.RegConfig | None = None,
) -> _types.DisplacementField3:
    """Instantaneous motion of a phase frame from its temporal neighbours.

    Both neighbour fields are expressed on the phase frame's grid and oriented
    forward in time: the field against the following frame points to where
    tissue goes next; the field against the preceding frame is negated so it
    also points forward. At a sequence end the single available field is
    returned.

    :param seq: Cine sequence.
    :param phase: ``ed`` or ``es``.
    :param cfg: Registration settings.
    :returns: The phase field.
    :raises ValidationError: If the phase frame has no neighbour.
    """
    t = seq.phase_index(phase)
    frame = seq.frames[t]
    fields: list[_types.DisplacementField3] = []
    if t > 0:
        back = _registration.register(frame, seq.frames[t - 1], cfg).field
        fields.append(_types.DisplacementField3(back.grid, -back.data))
    if t + 1 < len(seq.frames):
        fields.append(_registration.register(frame, seq.frames[t + 1], cfg).field)
    if not fields:
        raise ValidationError(f"phase frame {t} has no temporal neighbour")
    if len(fields) == 1:
        _LOGGER.info("phase %s at sequence end; using a single neighbour", phase)
        return fields[0]
    return temporal_mean_field(fields[0], fields[1])


__all__ = [
    "DEFAULT_ENERGY_FLOOR",
    "energy_maps",
    "local_moduli",
    "moduli_from_energy",
    "phase_field",
    "temporal_mean_field",
    "window_mean",
]
