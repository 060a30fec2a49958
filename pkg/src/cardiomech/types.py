"""Common data types and models for CardioMech.

This module contains the core data structures used throughout the library
to avoid circular import issues: voxel grids and the containers living on
them, material and optimizer settings, results, and the classifier backend
interface.

Arrays are indexed ``[i, j, k]`` with shape ``(nx, ny, nz)`` (vector and tensor
containers add trailing ``3`` / ``3, 3`` axes). Files store them x-fastest,
which is numpy's Fortran order for this shape.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal, NewType

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cardiomech.errors import ConfigError, GridMismatchError, ValidationError

CaseID = NewType("CaseID", str)
# Stable identifier of one subject / phantom case.

Phase = Literal["ed", "es"]

ACDC_CLASSES: tuple[str, ...] = ("NOR", "MINF", "DCM", "HCM", "RV")
# Diagnostic categories in canonical order; class index = position.

FOREGROUND_LABELS: tuple[int, ...] = (1, 2, 3, 4, 5, 6)


def check_keys(data: Mapping[str, Any], allowed: Iterable[str], what: str) -> None:
    """Reject configuration mappings carrying unknown keys.

    :param data: Mapping decoded from JSON.
    :param allowed: Accepted key names.
    :param what: Name of the record, used in the error message.
    :raises ConfigError: If ``data`` contains a key outside ``allowed``.
    """
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {what} key(s): {', '.join(unknown)}")


def _triple(values: Iterable[float], what: str) -> tuple[float, float, float]:
    out = tuple(float(v) for v in values)
    if len(out) != 3:  # noqa: PLR2004
        raise ValidationError(f"{what} must have 3 components, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ValidationError(f"{what} must be finite: {out}")
    return (out[0], out[1], out[2])


@dataclass(frozen=True)
class Grid:
    """Axis-aligned voxel grid.

    :param dims: Number of voxels along x, y, z.
    :param spacing: Voxel size in mm along x, y, z.
    :param origin: Physical position (mm) of voxel ``(0, 0, 0)``'s centre.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        """Validate and normalize the grid description.

        :raises ValidationError: If dims or spacing are not positive.
        """
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):  # noqa: PLR2004
            raise ValidationError(f"dims must be 3 positive integers: {self.dims}")
        spacing = _triple(self.spacing, "spacing")
        if any(s <= 0.0 for s in spacing):
            raise ValidationError(f"spacing must be strictly positive: {spacing}")
        object.__setattr__(self, "dims", (dims[0], dims[1], dims[2]))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _triple(self.origin, "origin"))

    @property
    def size(self) -> int:
        """Total number of voxels."""
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume_mm3(self) -> float:
        """Volume of one voxel in mm³."""
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def same_as(self, other: Grid, rtol: float = 1e-9) -> bool:
        """Return True when both grids describe the same voxel lattice.

        :param other: Grid to compare with.
        :param rtol: Relative tolerance on spacing and origin.
        :returns: True when dims match and spacing/origin agree within rtol.
        """
        if self.dims != other.dims:
            return False
        scale = max(self.spacing)
        return bool(
            np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0.0)
            and np.allclose(self.origin, other.origin, rtol=0.0, atol=rtol * scale)
        )

    def require_same(self, other: Grid, what: str = "inputs") -> None:
        """Raise unless ``other`` matches this grid.

        :param other: Grid to compare with.
        :param what: Description used in the error message.
        :raises GridMismatchError: If the grids differ.
        """
        if not self.same_as(other):
            raise GridMismatchError(
                f"grid mismatch between {what}: {self.dims}/{self.spacing}/"
                f"{self.origin} vs {other.dims}/{other.spacing}/{other.origin}"
            )

    def voxel_indices(self) -> NDArray[np.float64]:
        """Return integer voxel indices as floats, shape ``dims + (3,)``."""
        axes = [np.arange(n, dtype=np.float64) for n in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def physical_points(self) -> NDArray[np.float64]:
        """Return voxel-centre positions in mm, shape ``dims + (3,)``."""
        return np.asarray(self.origin) + self.voxel_indices() * np.asarray(
            self.spacing
        )

    def to_voxel(self, points_mm: ArrayLike) -> NDArray[np.float64]:
        """Convert physical points (last axis = xyz) to continuous voxel indices.

        :param points_mm: Physical coordinates in mm.
        :returns: Continuous voxel coordinates with the same shape.
        """
        pts = np.asarray(points_mm, dtype=np.float64)
        return (pts - np.asarray(self.origin)) / np.asarray(self.spacing)

    def coarsen(self, factor: int) -> Grid:
        """Return the grid produced by block pooling with ``factor``.

        Partial boundary blocks produce one extra coarse voxel. Every coarse
        voxel centre sits at the centre of a full block, including the last
        one along an axis whose block is partial. Pooled values there average
        only the voxels that exist (see :func:`cardiomech.volgrid.block_mean`),
        so that voxel lies up to ``(factor - 1) / 2`` fine voxels past the
        centroid of its data.

        :param factor: Pooling factor, at least 1.
        :returns: The coarse grid.
        :raises ValidationError: If factor is smaller than 1.
        """
        if factor < 1:
            raise ValidationError(f"pyramid factor must be >= 1, got {factor}")
        if factor == 1:
            return self
        dims = tuple(-(-n // factor) for n in self.dims)
        return Grid(
            dims=(dims[0], dims[1], dims[2]),
            spacing=(
                self.spacing[0] * factor,
                self.spacing[1] * factor,
                self.spacing[2] * factor,
            ),
            origin=(
                self.origin[0] + 0.5 * (factor - 1) * self.spacing[0],
                self.origin[1] + 0.5 * (factor - 1) * self.spacing[1],
                self.origin[2] + 0.5 * (factor - 1) * self.spacing[2],
            ),
        )

    def centre_span(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return the physical positions of the first and last voxel centres."""
        lo = np.asarray(self.origin, dtype=np.float64)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi

    def to_dict(self) -> dict[str, Any]:
        """Serialize the grid to a JSON-compatible mapping."""
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Grid:
        """Build a grid from :meth:`to_dict` output.

        :param data: Mapping with dims, spacing and origin.
        :returns: The decoded grid.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("dims", "spacing", "origin"), "grid")
        return cls(
            dims=tuple(data["dims"]),  # type: ignore[arg-type]
            spacing=tuple(data["spacing"]),  # type: ignore[arg-type]
            origin=tuple(data.get("origin", (0.0, 0.0, 0.0))),  # type: ignore[arg-type]
        )


def _frozen_array(
    data: ArrayLike, dtype: type[np.generic], shape: tuple[int, ...], what: str
) -> NDArray[Any]:
    arr = np.array(data, dtype=dtype, copy=True)
    if arr.shape != shape:
        raise ValidationError(f"{what} data has shape {arr.shape}, expected {shape}")
    if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} data contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Volume3:
    """Scalar 3D image with float32 values.

    :param grid: Voxel grid.
    :param data: Values, shape ``grid.dims``.
    """

    grid: Grid
    data: NDArray[np.float32]

    def __post_init__(self) -> None:
        """Coerce data to a read-only float32 array and validate it."""
        object.__setattr__(
            self, "data", _frozen_array(self.data, np.float32, self.grid.dims, "volume")
        )

    @classmethod
    def full(cls, grid: Grid, value: float) -> Volume3:
        """Create a constant volume.

        :param grid: Voxel grid.
        :param value: Fill value.
        :returns: The constant volume.
        """
        return cls(grid, np.full(grid.dims, value, dtype=np.float32))


@dataclass(frozen=True, eq=False)
class DisplacementField3:
    """Per-voxel displacement u(x) in mm; the mapping is x -> x + u(x).

    :param grid: Voxel grid.
    :param data: Displacements, shape ``grid.dims + (3,)``.
    """

    grid: Grid
    data: NDArray[np.float32]

    def __post_init__(self) -> None:
        """Coerce data to a read-only float32 array and validate it."""
        object.__setattr__(
            self,
            "data",
            _frozen_array(self.data, np.float32, (*self.grid.dims, 3), "field"),
        )

    @classmethod
    def zeros(cls, grid: Grid) -> DisplacementField3:
        """Create the identity (zero) displacement field.

        :param grid: Voxel grid.
        :returns: Zero field.
        """
        return cls(grid, np.zeros((*grid.dims, 3), dtype=np.float32))

    @classmethod
    def constant(cls, grid: Grid, vector: Sequence[float]) -> DisplacementField3:
        """Create a spatially constant displacement field.

        :param grid: Voxel grid.
        :param vector: Displacement in mm.
        :returns: Constant field.
        """
        data = np.broadcast_to(np.asarray(vector, dtype=np.float32), (*grid.dims, 3))
        return cls(grid, data)


@dataclass(frozen=True, eq=False)
class LabelMap3:
    """Unsigned integer label image; 0 is background.

    :param grid: Voxel grid.
    :param data: Labels, shape ``grid.dims``.
    """

    grid: Grid
    data: NDArray[np.uint8]

    def __post_init__(self) -> None:
        """Coerce data to a read-only uint8 array and validate its range.

        :raises ValidationError: If labels fall outside 0..255.
        """
        raw = np.asarray(self.data)
        if raw.size and (raw.min() < 0 or raw.max() > 255):  # noqa: PLR2004
            raise ValidationError("labels must lie in 0..255")
        object.__setattr__(
            self, "data", _frozen_array(raw, np.uint8, self.grid.dims, "label map")
        )

    def labels(self) -> tuple[int, ...]:
        """Return the sorted set of labels present, background included."""
        return tuple(int(v) for v in np.unique(self.data))

    def mask(self, label: int) -> NDArray[np.bool_]:
        """Return the boolean mask of one label.

        :param label: Label value.
        :returns: Boolean array, shape ``grid.dims``.
        """
        return self.data == label


@dataclass(frozen=True, eq=False)
class TensorField3:
    """Per-voxel 3x3 tensors (deformation gradient or Cauchy-Green tensors).

    :param grid: Voxel grid.
    :param data: Tensors, shape ``grid.dims + (3, 3)``, row-major per voxel.
    """

    grid: Grid
    data: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Coerce data to a read-only float64 array and validate it."""
        object.__setattr__(
            self,
            "data",
            _frozen_array(self.data, np.float64, (*self.grid.dims, 3, 3), "tensor"),
        )


@dataclass(frozen=True)
class MaterialParams:
    """Neo-Hookean material constants.

    :param mu: Shear modulus in kPa.
    :param kappa: Bulk modulus in kPa.
    """

    mu: float = 2.0
    kappa: float = 100.0

    def __post_init__(self) -> None:
        """Validate that both moduli are positive.

        :raises ValidationError: If a modulus is not strictly positive.
        """
        if not (self.mu > 0 and self.kappa > 0):
            raise ValidationError(
                f"moduli must be positive (mu={self.mu}, kappa={self.kappa})"
            )

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {"mu": self.mu, "kappa": self.kappa}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MaterialParams:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping with mu and kappa.
        :returns: Material parameters.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("mu", "kappa"), "material")
        defaults = cls()
        return cls(
            mu=float(data.get("mu", defaults.mu)),
            kappa=float(data.get("kappa", defaults.kappa)),
        )


@dataclass(frozen=True, eq=False)
class EnergyMaps:
    """Neo-Hookean energy densities.

    :param phi_dis: Distortional density I1·J^(-2/3) - 3 (dimensionless).
    :param phi_vol: Volumetric density (J - 1)² (dimensionless).
    :param phi: Total density (mu/2)·phi_dis + (kappa/2)·phi_vol in kPa.
    :param fold_count: Number of voxels with J at or below the floor.
    """

    phi_dis: Volume3
    phi_vol: Volume3
    phi: Volume3
    fold_count: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Multi-scale local cross-correlation settings.

    :param windows: Odd window edge lengths in voxels.
    :param variance_eps: Additive guard in both variance terms.
    """

    windows: tuple[int, ...] = (9, 5, 3)
    variance_eps: float = 1e-5

    def __post_init__(self) -> None:
        """Validate window sizes.

        :raises ValidationError: If windows are empty, even, or below 3.
        """
        windows = tuple(int(w) for w in self.windows)
        if not windows:
            raise ValidationError("at least one similarity window is required")
        for w in windows:
            if w < 3 or w % 2 == 0:  # noqa: PLR2004
                raise ValidationError(f"windows must be odd and >= 3, got {w}")
        if self.variance_eps < 0:
            raise ValidationError("variance_eps must be >= 0")
        object.__setattr__(self, "windows", windows)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {"windows": list(self.windows), "variance_eps": self.variance_eps}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimConfig:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping with windows and variance_eps.
        :returns: Similarity settings.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("windows", "variance_eps"), "sim")
        defaults = cls()
        return cls(
            windows=tuple(data.get("windows", defaults.windows)),
            variance_eps=float(data.get("variance_eps", defaults.variance_eps)),
        )


@dataclass(frozen=True)
class Stage:
    """One cascade stage.

    :param scale_factor: Pyramid factor of the stage (1 = full resolution).
    :param iterations: Maximum optimizer iterations.
    :param step_size: Initial step length in mm.
    """

    scale_factor: int
    iterations: int
    step_size: float

    def __post_init__(self) -> None:
        """Validate the stage.

        :raises ValidationError: On non-positive factor/step or negative iterations.
        """
        if self.scale_factor < 1:
            raise ValidationError(f"scale_factor must be >= 1: {self.scale_factor}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0: {self.iterations}")
        if not self.step_size > 0:
            raise ValidationError(f"step_size must be > 0: {self.step_size}")

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "scale_factor": self.scale_factor,
            "iterations": self.iterations,
            "step_size": self.step_size,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Stage:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping with the three stage fields.
        :returns: The stage.
        :raises ConfigError: On unknown or missing keys.
        """
        check_keys(data, ("scale_factor", "iterations", "step_size"), "stage")
        try:
            return cls(
                scale_factor=int(data["scale_factor"]),
                iterations=int(data["iterations"]),
                step_size=float(data["step_size"]),
            )
        except KeyError as exc:
            raise ConfigError(f"stage is missing key {exc}") from exc


def _default_stages() -> tuple[Stage, ...]:
    return (Stage(4, 60, 0.6), Stage(2, 60, 0.3), Stage(1, 40, 0.15))


@dataclass(frozen=True)
class RegConfig:
    """Registration and optimizer hyperparameters.

    :param stages: Cascade stages ordered coarse to fine.
    :param lam: Weight of the Neo-Hookean term (JSON key ``lambda``).
    :param material: Material constants of the regularizer.
    :param sim: Similarity settings.
    :param field_smoothing_sigma_mm: Gaussian gradient smoothing, 0 disables.
    :param seed: Seed for every random choice made on behalf of this config.
    :param convergence_tol: Relative loss change ending a stage early.
    """

    stages: tuple[Stage, ...] = field(default_factory=_default_stages)
    lam: float = 0.1
    material: MaterialParams = field(default_factory=MaterialParams)
    sim: SimConfig = field(default_factory=SimConfig)
    field_smoothing_sigma_mm: float = 1.5
    seed: int = 0
    convergence_tol: float = 1e-5

    def __post_init__(self) -> None:
        """Validate stage ordering and scalar ranges.

        :raises ValidationError: On invalid values.
        """
        stages = tuple(self.stages)
        factors = [s.scale_factor for s in stages]
        if any(a < b for a, b in zip(factors, factors[1:], strict=False)):
            raise ValidationError(f"stages must be ordered coarse to fine: {factors}")
        if stages and factors[-1] != 1:
            raise ValidationError("the last stage must run at scale_factor 1")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0: {self.lam}")
        if self.field_smoothing_sigma_mm < 0:
            raise ValidationError("field_smoothing_sigma_mm must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")
        if self.convergence_tol < 0:
            raise ValidationError("convergence_tol must be >= 0")
        object.__setattr__(self, "stages", stages)

    def to_dict(self) -> dict[str, Any]:
        """Serialize with the documented JSON field names."""
        return {
            "stages": [s.to_dict() for s in self.stages],
            "lambda": self.lam,
            "material": self.material.to_dict(),
            "sim": self.sim.to_dict(),
            "field_smoothing_sigma_mm": self.field_smoothing_sigma_mm,
            "seed": self.seed,
            "convergence_tol": self.convergence_tol,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RegConfig:
        """Decode from :meth:`to_dict` output; absent keys take defaults.

        :param data: Mapping decoded from JSON.
        :returns: The registration config.
        :raises ConfigError: On unknown keys.
        """
        check_keys(
            data,
            (
                "stages",
                "lambda",
                "material",
                "sim",
                "field_smoothing_sigma_mm",
                "seed",
                "convergence_tol",
            ),
            "registration",
        )
        defaults = cls()
        stages = (
            tuple(Stage.from_dict(s) for s in data["stages"])
            if "stages" in data
            else defaults.stages
        )
        return cls(
            stages=stages,
            lam=float(data.get("lambda", defaults.lam)),
            material=MaterialParams.from_dict(data.get("material", {})),
            sim=SimConfig.from_dict(data.get("sim", {})),
            field_smoothing_sigma_mm=float(
                data.get("field_smoothing_sigma_mm", defaults.field_smoothing_sigma_mm)
            ),
            seed=int(data.get("seed", defaults.seed)),
            convergence_tol=float(
                data.get("convergence_tol", defaults.convergence_tol)
            ),
        )


@dataclass(frozen=True, eq=False)
class RegResult:
    """Outcome of a registration.

    :param field: Total accumulated displacement at full resolution.
    :param per_stage_losses: Final (L_sim, L_nhe, L) of every stage.
    :param fold_fraction: Fraction of voxels with J <= 0.
    :param iterations_used: Accepted iterations per stage.
    :param initial_loss: Loss of the zero field at full resolution.
    :param final_loss: Loss of the returned field at full resolution.
    """

    field: DisplacementField3
    per_stage_losses: tuple[tuple[float, float, float], ...]
    fold_fraction: float
    iterations_used: tuple[int, ...]
    initial_loss: float
    final_loss: float

    def diagnostics(self) -> dict[str, Any]:
        """Return the JSON diagnostics document."""
        return {
            "per_stage_losses": [
                {"sim": s, "nhe": n, "total": t} for s, n, t in self.per_stage_losses
            ],
            "fold_fraction": self.fold_fraction,
            "iterations_used": list(self.iterations_used),
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
        }


@dataclass(frozen=True, eq=False)
class CineSequence:
    """Cine frames on one grid with the two annotated phases.

    :param frames: Ordered frames.
    :param ed_index: Index of the end-diastolic frame.
    :param es_index: Index of the end-systolic frame.
    :param labels_ed: Labels of the ED frame.
    :param labels_es: Labels of the ES frame.
    """

    frames: tuple[Volume3, ...]
    ed_index: int
    es_index: int
    labels_ed: LabelMap3
    labels_es: LabelMap3

    def __post_init__(self) -> None:
        """Validate indices and grids.

        :raises ValidationError: On invalid or equal phase indices.
        :raises GridMismatchError: If frames or labels live on different grids.
        """
        frames = tuple(self.frames)
        if not frames:
            raise ValidationError("a cine sequence needs at least one frame")
        for name, idx in (("ed_index", self.ed_index), ("es_index", self.es_index)):
            if not 0 <= idx < len(frames):
                raise ValidationError(f"{name} {idx} outside 0..{len(frames) - 1}")
        if self.ed_index == self.es_index:
            raise ValidationError("ed_index and es_index must differ")
        grid = frames[0].grid
        for i, f in enumerate(frames):
            grid.require_same(f.grid, f"frame 0 and frame {i}")
        grid.require_same(self.labels_ed.grid, "frames and ED labels")
        grid.require_same(self.labels_es.grid, "frames and ES labels")
        object.__setattr__(self, "frames", frames)

    @property
    def grid(self) -> Grid:
        """Grid shared by all frames."""
        return self.frames[0].grid

    def phase_index(self, phase: Phase) -> int:
        """Return the frame index of a phase.

        :param phase: ``"ed"`` or ``"es"``.
        :returns: Frame index.
        """
        return self.ed_index if phase == "ed" else self.es_index

    def phase_labels(self, phase: Phase) -> LabelMap3:
        """Return the annotated labels of a phase.

        :param phase: ``"ed"`` or ``"es"``.
        :returns: Label map.
        """
        return self.labels_ed if phase == "ed" else self.labels_es

    def labels_for_frame(self, index: int) -> LabelMap3 | None:
        """Return annotated labels when ``index`` is ED or ES, else None.

        :param index: Frame index.
        :returns: Labels or None.
        """
        if index == self.ed_index:
            return self.labels_ed
        if index == self.es_index:
            return self.labels_es
        return None


@dataclass(frozen=True, eq=False)
class ModuliMaps:
    """Voxel-wise shear and bulk moduli.

    :param mu_map: Local shear modulus in kPa.
    :param kappa_map: Local bulk modulus in kPa.
    :param validity_mask: 1 where both denominators exceeded the energy floor.
    :param mu_valid: 1 where the distortional denominator exceeded the floor.
    :param kappa_valid: 1 where the volumetric denominator exceeded the floor.
    """

    mu_map: Volume3
    kappa_map: Volume3
    validity_mask: LabelMap3
    mu_valid: LabelMap3
    kappa_valid: LabelMap3


@dataclass(frozen=True)
class FeatureVector:
    """Named per-case features in canonical order.

    :param case_id: Case identifier.
    :param class_label: Diagnostic category.
    :param values: Ordered (name, value) pairs.
    :param warnings: Records of guarded divisions.
    """

    case_id: CaseID
    class_label: str
    values: tuple[tuple[str, float], ...]
    warnings: tuple[str, ...] = ()

    def names(self) -> tuple[str, ...]:
        """Return feature names in order."""
        return tuple(n for n, _ in self.values)

    def as_array(self) -> NDArray[np.float64]:
        """Return feature values in order."""
        return np.asarray([v for _, v in self.values], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with class labels.

    :param features: Matrix of shape (cases, features).
    :param labels: Class name per case.
    :param case_ids: Identifier per case.
    :param feature_names: Name per column.
    :param class_set: Declared classes; class index = position.
    """

    features: NDArray[np.float64]
    labels: tuple[str, ...]
    case_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    class_set: tuple[str, ...] = ACDC_CLASSES

    def __post_init__(self) -> None:
        """Validate shapes, finiteness and class membership.

        :raises ValidationError: On inconsistent content.
        """
        x = np.array(self.features, dtype=np.float64, copy=True)
        if x.ndim == 1 and len(self.feature_names) == 0:
            x = x.reshape(-1, 0)
        if x.ndim != 2:  # noqa: PLR2004
            raise ValidationError("feature matrix must be 2-D")
        labels = tuple(str(v) for v in self.labels)
        if x.shape != (len(labels), len(self.feature_names)):
            raise ValidationError(
                f"feature matrix {x.shape} does not match "
                f"{len(labels)} cases x {len(self.feature_names)} names"
            )
        if len(self.case_ids) != len(labels):
            raise ValidationError("one case id per row is required")
        if not np.all(np.isfinite(x)):
            raise ValidationError("feature matrix contains missing/non-finite values")
        unknown = sorted(set(labels) - set(self.class_set))
        if unknown:
            raise ValidationError(f"classes outside the declared set: {unknown}")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValidationError("feature names must be unique")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "case_ids", tuple(str(c) for c in self.case_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_set", tuple(self.class_set))

    @property
    def n_cases(self) -> int:
        """Number of cases."""
        return len(self.labels)

    @property
    def y(self) -> NDArray[np.int64]:
        """Class indices into ``class_set``."""
        index = {c: i for i, c in enumerate(self.class_set)}
        return np.asarray([index[c] for c in self.labels], dtype=np.int64)

    def select_features(self, names: Sequence[str]) -> Dataset:
        """Return a dataset restricted to the given columns, in that order.

        :param names: Feature names to keep.
        :returns: Column subset.
        :raises ValidationError: If a name is unknown.
        """
        lookup = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise ValidationError(f"unknown feature(s): {missing}")
        cols = [lookup[n] for n in names]
        return Dataset(
            self.features[:, cols],
            self.labels,
            self.case_ids,
            tuple(names),
            self.class_set,
        )

    def select_cases(self, indices: Sequence[int] | NDArray[np.int64]) -> Dataset:
        """Return a dataset restricted to the given rows.

        :param indices: Row indices.
        :returns: Row subset.
        """
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            tuple(self.labels[i] for i in idx),
            tuple(self.case_ids[i] for i in idx),
            self.feature_names,
            self.class_set,
        )

    @classmethod
    def from_feature_vectors(
        cls, vectors: Sequence[FeatureVector], class_set: tuple[str, ...] = ACDC_CLASSES
    ) -> Dataset:
        """Stack feature vectors sharing one name ordering.

        :param vectors: Per-case feature vectors.
        :param class_set: Declared classes.
        :returns: Dataset.
        :raises ValidationError: If vectors disagree on names.
        """
        if not vectors:
            raise ValidationError("no feature vectors given")
        names = vectors[0].names()
        for v in vectors[1:]:
            if v.names() != names:
                raise ValidationError(f"feature names of case {v.case_id} differ")
        return cls(
            np.stack([v.as_array() for v in vectors]),
            tuple(v.class_label for v in vectors),
            tuple(v.case_id for v in vectors),
            names,
            class_set,
        )


@dataclass(frozen=True)
class SelectionStep:
    """One entry of the feature-selection trace.

    :param step: Running step counter.
    :param feature: Feature that was tested.
    :param action: ``removed``, ``kept`` or ``readded``.
    :param accuracy: Accuracy measured for the tentative set.
    """

    step: int
    feature: str
    action: Literal["removed", "kept", "readded"]
    accuracy: float


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of wrapper feature selection.

    :param selected: Retained features in canonical order.
    :param discarded: Discarded features in discard order.
    :param acc_max: Accuracy of ``selected``.
    :param trace: Every tentative move.
    """

    selected: tuple[str, ...]
    discarded: tuple[str, ...]
    acc_max: float
    trace: tuple[SelectionStep, ...]

    def to_dict(self) -> dict[str, Any]:
        """Serialize to the JSON document layout."""
        return {
            "selected": list(self.selected),
            "discarded": list(self.discarded),
            "acc_max": self.acc_max,
            "trace": [
                {
                    "step": s.step,
                    "feature": s.feature,
                    "action": s.action,
                    "accuracy": s.accuracy,
                }
                for s in self.trace
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SelectionResult:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping decoded from JSON.
        :returns: Selection result.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("selected", "discarded", "acc_max", "trace"), "selection")
        return cls(
            selected=tuple(data["selected"]),
            discarded=tuple(data["discarded"]),
            acc_max=float(data["acc_max"]),
            trace=tuple(
                SelectionStep(
                    int(s["step"]), str(s["feature"]), s["action"], float(s["accuracy"])
                )
                for s in data.get("trace", [])
            ),
        )


@dataclass(frozen=True)
class ClassifierSpec:
    """Named classifier with hyperparameters.

    :param name: Registry name (``logreg`` or ``knn`` by default).
    :param params: Hyperparameters understood by the named classifier.
    """

    name: str = "logreg"
    params: Mapping[str, float | int] = field(
        default_factory=lambda: dict[str, float | int]()
    )

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {"name": self.name, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ClassifierSpec:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping decoded from JSON.
        :returns: Classifier spec.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("name", "params"), "classifier")
        return cls(
            name=str(data.get("name", "logreg")),
            params=dict(data.get("params", {})),
        )


@dataclass(frozen=True)
class CVSpec:
    """Cross-validation protocol.

    :param folds: Number of stratified folds.
    """

    folds: int = 5

    def __post_init__(self) -> None:
        """Validate the fold count.

        :raises ValidationError: If fewer than 2 folds are requested.
        """
        if self.folds < 2:  # noqa: PLR2004
            raise ValidationError(f"at least 2 folds are required, got {self.folds}")

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {"folds": self.folds}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CVSpec:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping decoded from JSON.
        :returns: CV spec.
        :raises ConfigError: On unknown keys.
        """
        check_keys(data, ("folds",), "cv")
        return cls(folds=int(data.get("folds", 5)))


class Classifier(ABC):
    """Abstract base class for classifier backends.

    Backends standardize features with statistics of the data passed to
    :meth:`fit` only.
    """

    @abstractmethod
    def fit(
        self, features: NDArray[np.float64], labels: NDArray[np.int64], n_classes: int
    ) -> None:
        """Train on a feature matrix.

        :param features: Matrix of shape (cases, features).
        :param labels: Class index per case.
        :param n_classes: Number of declared classes.
        :returns: None
        """
        ...

    @abstractmethod
    def predict(self, features: NDArray[np.float64]) -> NDArray[np.int64]:
        """Predict class indices.

        :param features: Matrix of shape (cases, features).
        :returns: Class index per case.
        """
        ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """Serialize the trained model to a JSON-compatible mapping."""
        ...


__all__ = [
    "ACDC_CLASSES",
    "FOREGROUND_LABELS",
    "CVSpec",
    "CaseID",
    "CineSequence",
    "Classifier",
    "ClassifierSpec",
    "Dataset",
    "DisplacementField3",
    "EnergyMaps",
    "FeatureVector",
    "Grid",
    "LabelMap3",
    "MaterialParams",
    "ModuliMaps",
    "Phase",
    "RegConfig",
    "RegResult",
    "SelectionResult",
    "SelectionStep",
    "SimConfig",
    "Stage",
    "TensorField3",
    "Volume3",
    "check_keys",
]
