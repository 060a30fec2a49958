"""Interpolation, warping and resolution pyramid operations on voxel grids.

Displacements are stored in mm. They are converted to voxel units only when
computing sample positions (``index + u / spacing``), so a zero field samples
voxel centres exactly. Samples outside the grid are clamped to the boundary
voxel plane.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

import cardiomech.types as _types
from cardiomech.errors import GridMismatchError, ValidationError

_LOGGER = logging.getLogger(__name__)


def sample_coordinates(
    grid: _types.Grid, displacement: NDArray[np.floating]
) -> NDArray[np.float64]:
    """Return continuous voxel coordinates of ``x_p + u(p)`` for every voxel.

    :param grid: Grid of the displacement.
    :param displacement: Displacement in mm, shape ``grid.dims + (3,)``.
    :returns: Voxel coordinates, shape ``grid.dims + (3,)``.
    """
    return grid.voxel_indices() + np.asarray(displacement, np.float64) / np.asarray(
        grid.spacing
    )


def clamp_coordinates(
    coords: NDArray[np.float64], dims: Sequence[int]
) -> NDArray[np.float64]:
    """Clamp voxel coordinates (last axis = xyz) into ``[0, n - 1]`` per axis.

    :param coords: Voxel coordinates.
    :param dims: Grid dimensions.
    :returns: Clamped copy.
    """
    upper = np.asarray(dims, dtype=np.float64) - 1.0
    return np.clip(coords, 0.0, upper)


def interpolate(
    data: NDArray[np.floating], coords: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Trilinearly interpolate a scalar array at voxel coordinates.

    :param data: Scalar array, shape ``(nx, ny, nz)``.
    :param coords: Voxel coordinates, last axis = xyz.
    :returns: Interpolated values, shape ``coords.shape[:-1]``.
    """
    clamped = clamp_coordinates(coords, data.shape)
    out = ndimage.map_coordinates(
        np.asarray(data, dtype=np.float64),
        np.moveaxis(clamped, -1, 0),
        order=1,
        mode="nearest",
    )
    return np.asarray(out, dtype=np.float64)


def interpolate_with_derivatives(
    data: NDArray[np.floating], coords: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Interpolate and differentiate the trilinear interpolant.

    Derivatives are taken with respect to the voxel coordinate. On cell faces
    the forward (right-sided) derivative is returned. Along an axis where the
    coordinate was clamped the derivative is zero.

    :param data: Scalar array, shape ``(nx, ny, nz)``.
    :param coords: Voxel coordinates, last axis = xyz.
    :returns: ``(values, derivatives)`` with derivatives' last axis = xyz.
    """
    arr = np.asarray(data, dtype=np.float64)
    dims = arr.shape
    clamped = clamp_coordinates(coords, dims)
    values = interpolate(arr, clamped)
    derivs = np.zeros((*coords.shape[:-1], 3), dtype=np.float64)
    for axis in range(3):
        n = dims[axis]
        if n < 2:  # noqa: PLR2004
            continue
        forward = np.diff(arr, axis=axis, append=np.take(arr, [n - 1], axis=axis))
        along = clamped.copy()
        along[..., axis] = np.floor(clamped[..., axis])
        d = ndimage.map_coordinates(
            forward, np.moveaxis(along, -1, 0), order=1, mode="nearest"
        )
        inside = (coords[..., axis] >= 0.0) & (coords[..., axis] < n - 1)
        derivs[..., axis] = np.where(inside, d, 0.0)
    return values, derivs


def trilinear_sample(vol: _types.Volume3, point_mm: ArrayLike) -> float:
    """Sample a volume at one physical point.

    :param vol: Volume to sample.
    :param point_mm: Physical position (x, y, z) in mm.
    :returns: Interpolated value.
    :raises ValidationError: If the point is not a finite 3-vector.
    """
    point = np.asarray(point_mm, dtype=np.float64)
    if point.shape != (3,) or not np.all(np.isfinite(point)):
        raise ValidationError(f"sample point must be a finite 3-vector: {point_mm}")
    coords = vol.grid.to_voxel(point)[np.newaxis, :]
    return float(interpolate(vol.data, coords)[0])


def warp_array(
    data: NDArray[np.floating], grid: _types.Grid, displacement: NDArray[np.floating]
) -> NDArray[np.float64]:
    """Warp a raw scalar array by a raw displacement array on ``grid``.

    :param data: Scalar array on ``grid``.
    :param grid: Grid shared by data and displacement.
    :param displacement: Displacement in mm.
    :returns: ``data`` sampled at ``x_p + u(p)``.
    """
    return interpolate(data, sample_coordinates(grid, displacement))


def warp_volume(
    vol: _types.Volume3, field: _types.DisplacementField3
) -> _types.Volume3:
    """Resample ``vol`` at ``x_p + u(p)`` for every voxel ``p``.

    :param vol: Moving volume.
    :param field: Displacement on the same grid.
    :returns: Warped volume.
    :raises GridMismatchError: If the grids differ.
    """
    vol.grid.require_same(field.grid, "volume and field")
    return _types.Volume3(vol.grid, warp_array(vol.data, vol.grid, field.data))


def warp_labels(
    labels: _types.LabelMap3, field: _types.DisplacementField3
) -> _types.LabelMap3:
    """Nearest-neighbour warp of a label map; ties round toward the lower index.

    :param labels: Labels to warp.
    :param field: Displacement on the same grid.
    :returns: Warped labels.
    :raises GridMismatchError: If the grids differ.
    """
    labels.grid.require_same(field.grid, "labels and field")
    coords = sample_coordinates(labels.grid, field.data)
    nearest = np.ceil(coords - 0.5).astype(np.int64)
    upper = np.asarray(labels.grid.dims, dtype=np.int64) - 1
    nearest = np.clip(nearest, 0, upper)
    out = labels.data[nearest[..., 0], nearest[..., 1], nearest[..., 2]]
    return _types.LabelMap3(labels.grid, out)


def block_mean(data: NDArray[np.floating], factor: int) -> NDArray[np.float64]:
    """Average non-overlapping ``factor³`` blocks of the first three axes.

    Partial boundary blocks average the voxels available.

    :param data: Array whose first three axes are spatial.
    :param factor: Block edge length.
    :returns: Pooled array.
    """
    out = np.asarray(data, dtype=np.float64)
    for axis in range(3):
        starts = np.arange(0, out.shape[axis], factor)
        sums = np.add.reduceat(out, starts, axis=axis)
        counts = np.diff(np.append(starts, out.shape[axis])).astype(np.float64)
        shape = [1] * out.ndim
        shape[axis] = counts.size
        out = sums / counts.reshape(shape)
    return out


def downsample(vol: _types.Volume3, factor: int) -> _types.Volume3:
    """Block-average pooling by an integer factor.

    :param vol: Volume to pool.
    :param factor: Pooling factor, at least 1.
    :returns: Pooled volume on :meth:`Grid.coarsen` of the input grid.
    :raises ValidationError: If factor is smaller than 1.
    """
    if factor < 1:
        raise ValidationError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return vol
    return _types.Volume3(vol.grid.coarsen(factor), block_mean(vol.data, factor))


def _check_extent(source: _types.Grid, target: _types.Grid) -> None:
    src_lo, src_hi = source.centre_span()
    dst_lo, dst_hi = target.centre_span()
    tol = 0.5 * np.asarray(source.spacing) * (1.0 + 1e-9)
    if np.any(np.abs(src_lo - dst_lo) > tol) or np.any(np.abs(src_hi - dst_hi) > tol):
        raise GridMismatchError(
            f"field extent {src_lo}..{src_hi} does not cover target "
            f"{dst_lo}..{dst_hi} within half a voxel"
        )


def resample_components(
    data: NDArray[np.floating], source: _types.Grid, target: _types.Grid
) -> NDArray[np.float64]:
    """Trilinearly resample every trailing component onto another grid.

    :param data: Array of shape ``source.dims + (c,)``.
    :param source: Grid of ``data``.
    :param target: Output grid.
    :returns: Array of shape ``target.dims + (c,)``.
    """
    coords = source.to_voxel(target.physical_points())
    arr = np.asarray(data, dtype=np.float64)
    return np.stack(
        [interpolate(arr[..., c], coords) for c in range(arr.shape[-1])], axis=-1
    )


def upsample_field(
    field: _types.DisplacementField3, target_grid: _types.Grid
) -> _types.DisplacementField3:
    """Interpolate a displacement field onto a finer grid of the same extent.

    Values are in mm and are not rescaled.

    :param field: Coarse field.
    :param target_grid: Output grid.
    :returns: Field on ``target_grid``.
    :raises GridMismatchError: If the extents differ by more than half a
        coarse voxel.
    """
    if field.grid.same_as(target_grid):
        return field
    _check_extent(field.grid, target_grid)
    return _types.DisplacementField3(
        target_grid, resample_components(field.data, field.grid, target_grid)
    )


def accumulate_fields(
    fields: Sequence[_types.DisplacementField3],
) -> _types.DisplacementField3:
    """Voxelwise vector sum of displacement fields on one grid.

    :param fields: Fields to sum, at least one.
    :returns: The summed field.
    :raises ValidationError: If the list is empty.
    :raises GridMismatchError: If the grids differ.
    """
    if not fields:
        raise ValidationError("accumulate_fields needs at least one field")
    grid = fields[0].grid
    total = np.zeros((*grid.dims, 3), dtype=np.float64)
    for i, f in enumerate(fields):
        grid.require_same(f.grid, f"field 0 and field {i}")
        total += f.data
    return _types.DisplacementField3(grid, total)


__all__ = [
    "accumulate_fields",
    "block_mean",
    "clamp_coordinates",
    "downsample",
    "interpolate",
    "interpolate_with_derivatives",
    "resample_components",
    "sample_coordinates",
    "trilinear_sample",
    "upsample_field",
    "warp_array",
    "warp_labels",
    "warp_volume",
]
