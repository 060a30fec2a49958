"""Analytic cardiac-like phantom with ground-truth motion.

Geometry (reference configuration, frame 0 = ED):

* The LV is a closed cylinder along z: cavity radius ``r_in``, outer radius
  ``r_out``, cavity half-length ``h`` and caps as thick as the wall.
* The RV cavity is a disc of radius ``r_rv`` whose axis lies
  ``r_out + gap`` from the LV axis along +x, minus the LV.

Motion is described by a backward map ``psi_t`` taking a point of frame
``t`` to its reference position. It composes an LV twist about the LV axis,
an LV radial contraction and an RV radial contraction, all modulated by a
half-cosine cycle that is 0 at frame 0 and peaks at ES = ``frames // 2``.
The radial pieces move points along rays and are monotone along them, so the
map is invertible whenever the amplitudes are below 1.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage
from scipy.special import expit

import cardiomech.features as _features
import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

_DEFAULT_DIMS = (48, 48, 48)
_DEFAULT_SPACING = 1.5
_DEFAULT_EXTENT = (_DEFAULT_DIMS[0] - 1) * _DEFAULT_SPACING

# Geometry as fractions of the smallest grid extent.
_LV_CENTRE_X = 0.40
_LV_INNER = 0.09
_LV_OUTER = 0.16
_LV_HALF_LENGTH = 0.17
_RV_GAP = 0.01
_RV_RADIUS = 0.13

_RV_LENGTH_RATIO = 0.85
_KERNEL_REACH = 1.3
_SECTOR_CONCENTRATION = 4.0
_BISECTION_STEPS = 40
_JITTER = 0.10

MARGIN_VOXELS = 4

INTENSITY_BACKGROUND = 0.15
INTENSITY_MYOCARDIUM = 0.35
INTENSITY_LV_BLOOD = 1.0
INTENSITY_RV_BLOOD = 0.85

_RayFn = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class PhantomParams:
    """Phantom description; lengths in mm, positions relative to the origin.

    The defaults fit a 48³ grid of 1.5 mm voxels; :meth:`for_grid` rescales
    the geometry to another grid.

    :param dims: Grid dimensions.
    :param spacing: Voxel size in mm.
    :param frames: Number of cine frames (at least 3).
    :param lv_centre_mm: Point on the LV long axis at mid-cavity.
    :param lv_inner_radius_mm: LV cavity radius.
    :param lv_outer_radius_mm: LV epicardial radius.
    :param lv_half_length_mm: Half-length of the LV cavity along z.
    :param rv_gap_mm: Distance from the LV epicardium to the RV axis.
    :param rv_radius_mm: Radius of the RV disc.
    :param contraction_amplitude: LV radial contraction strength in [0, 1).
    :param rv_contraction_amplitude: RV radial contraction strength in [0, 1).
    :param twist_amplitude_rad: LV twist at the cavity ends, at ES.
    :param infarct_weight: Fraction of contraction lost in the infarct sector.
    :param infarct_angle_rad: Direction of the infarct sector about the LV axis.
    :param wall_thickness_scale: Multiplier on the LV wall thickness.
    :param noise_sigma: Std of the independent per-frame Gaussian noise.
    :param texture_sigma_vox: Smoothing of the random texture, in voxels.
    :param texture_contrast: Relative strength of the texture.
    :param class_preset: Class the parameters represent.
    """

    dims: tuple[int, int, int] = _DEFAULT_DIMS
    spacing: tuple[float, float, float] = (_DEFAULT_SPACING,) * 3
    frames: int = 10
    lv_centre_mm: tuple[float, float, float] = (
        _LV_CENTRE_X * _DEFAULT_EXTENT,
        0.5 * _DEFAULT_EXTENT,
        0.5 * _DEFAULT_EXTENT,
    )
    lv_inner_radius_mm: float = _LV_INNER * _DEFAULT_EXTENT
    lv_outer_radius_mm: float = _LV_OUTER * _DEFAULT_EXTENT
    lv_half_length_mm: float = _LV_HALF_LENGTH * _DEFAULT_EXTENT
    rv_gap_mm: float = _RV_GAP * _DEFAULT_EXTENT
    rv_radius_mm: float = _RV_RADIUS * _DEFAULT_EXTENT
    contraction_amplitude: float = 0.3
    rv_contraction_amplitude: float = 0.3
    twist_amplitude_rad: float = 0.15
    infarct_weight: float = 0.0
    infarct_angle_rad: float = math.pi
    wall_thickness_scale: float = 1.0
    noise_sigma: float = 0.02
    texture_sigma_vox: float = 1.5
    texture_contrast: float = 0.25
    class_preset: str = "NOR"

    def __post_init__(self) -> None:
        """Validate the parameters.

        :raises ValidationError: On invalid geometry or amplitudes.
        """
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(
            self, "lv_centre_mm", tuple(float(c) for c in self.lv_centre_mm)
        )
        _types.Grid(self.dims, self.spacing)
        if len(self.lv_centre_mm) != 3:  # noqa: PLR2004
            raise ValidationError("lv_centre_mm needs 3 coordinates")
        if self.frames < 3:  # noqa: PLR2004
            raise ValidationError(
                f"a phantom needs at least 3 frames, got {self.frames}"
            )
        if not 0.0 < self.lv_inner_radius_mm < self.lv_outer_radius_mm:
            raise ValidationError(
                "LV radii must satisfy 0 < inner < outer, got "
                f"{self.lv_inner_radius_mm} and {self.lv_outer_radius_mm}"
            )
        if self.lv_half_length_mm <= 0 or self.rv_radius_mm <= 0 or self.rv_gap_mm < 0:
            raise ValidationError("LV length, RV radius and RV gap must be positive")
        for name in ("contraction_amplitude", "rv_contraction_amplitude"):
            value = float(getattr(self, name))
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {value}")
        if not 0.0 <= self.infarct_weight <= 1.0:
            raise ValidationError("infarct_weight must lie in [0, 1]")
        if self.wall_thickness_scale <= 0 or self.effective_radii[0] <= 0:
            raise ValidationError("wall_thickness_scale leaves no LV cavity")
        if self.noise_sigma < 0 or self.texture_sigma_vox <= 0:
            raise ValidationError("noise_sigma must be >= 0 and texture_sigma_vox > 0")
        if self.class_preset not in _types.ACDC_CLASSES:
            raise ValidationError(f"unknown class preset {self.class_preset!r}")

    @classmethod
    def for_grid(
        cls,
        dims: Sequence[int] = _DEFAULT_DIMS,
        spacing: Sequence[float] = (_DEFAULT_SPACING,) * 3,
        frames: int = 10,
        **overrides: Any,
    ) -> PhantomParams:
        """Build default parameters with the geometry scaled to a grid.

        :param dims: Grid dimensions.
        :param spacing: Voxel size in mm.
        :param frames: Number of frames.
        :param overrides: Further field values.
        :returns: Parameters.
        :raises ValidationError: On invalid values.
        """
        extent = [(int(n) - 1) * float(s) for n, s in zip(dims, spacing, strict=True)]
        size = min(extent)
        values: dict[str, Any] = {
            "dims": tuple(int(n) for n in dims),
            "spacing": tuple(float(s) for s in spacing),
            "frames": frames,
            "lv_centre_mm": (
                _LV_CENTRE_X * extent[0],
                0.5 * extent[1],
                0.5 * extent[2],
            ),
            "lv_inner_radius_mm": _LV_INNER * size,
            "lv_outer_radius_mm": _LV_OUTER * size,
            "lv_half_length_mm": _LV_HALF_LENGTH * size,
            "rv_gap_mm": _RV_GAP * size,
            "rv_radius_mm": _RV_RADIUS * size,
        }
        values.update(overrides)
        return cls(**values)

    @property
    def grid(self) -> _types.Grid:
        """Grid of the generated volumes."""
        return _types.Grid(self.dims, self.spacing)

    @property
    def es_index(self) -> int:
        """Frame of peak contraction."""
        return self.frames // 2

    @property
    def effective_radii(self) -> tuple[float, float]:
        """LV cavity and epicardial radii after the wall-thickness scale.

        Thickening grows the wall 40% inward and 60% outward.
        """
        wall = self.lv_outer_radius_mm - self.lv_inner_radius_mm
        delta = (self.wall_thickness_scale - 1.0) * wall
        inner = self.lv_inner_radius_mm - 0.4 * delta
        return inner, self.lv_outer_radius_mm + 0.6 * delta

    @property
    def wall_thickness_mm(self) -> float:
        """Effective LV wall thickness."""
        inner, outer = self.effective_radii
        return outer - inner

    def cycle(self, t: int) -> float:
        """Motion modulation of frame ``t``: 0 at frame 0, 1 at ES for even counts.

        >>> PhantomParams(frames=10).cycle(5)
        1.0
        """
        return 0.5 * (1.0 - math.cos(2.0 * math.pi * t / self.frames))

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PhantomParams:
        """Decode from :meth:`to_dict` output; absent keys take defaults.

        :param data: Mapping decoded from JSON.
        :returns: Parameters.
        :raises ConfigError: On unknown keys.
        :raises ValidationError: On invalid values.
        """
        names = [f.name for f in fields(cls)]
        _types.check_keys(data, names, "phantom")
        values = {
            k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
        }
        return cls(**values)


@dataclass(frozen=True)
class _Geometry:
    centre: NDArray[np.float64]
    rv_centre: NDArray[np.float64]
    inner: float
    outer: float
    half_length: float
    cap: float
    rv_radius: float
    rv_half_length: float
    sigma_lv: float
    sigma_rv: float
    sigma_z: float


def _geometry(params: PhantomParams) -> _Geometry:
    inner, outer = params.effective_radii
    centre = np.asarray(params.lv_centre_mm, dtype=np.float64)
    rv_centre = centre + np.array([outer + params.rv_gap_mm, 0.0, 0.0])
    cap = outer - inner
    return _Geometry(
        centre=centre,
        rv_centre=rv_centre,
        inner=inner,
        outer=outer,
        half_length=params.lv_half_length_mm,
        cap=cap,
        rv_radius=params.rv_radius_mm,
        rv_half_length=_RV_LENGTH_RATIO * params.lv_half_length_mm,
        sigma_lv=_KERNEL_REACH * outer,
        sigma_rv=_KERNEL_REACH * params.rv_radius_mm,
        sigma_z=_KERNEL_REACH * (params.lv_half_length_mm + cap),
    )


def _bump(x: NDArray[np.float64], sigma: float) -> NDArray[np.float64]:
    return np.exp(-((x / sigma) ** 2))


def _lv_scale(params: PhantomParams, geo: _Geometry, m: float) -> _RayFn:
    amp = params.contraction_amplitude * m

    def scale(r: NDArray[np.float64], rel: NDArray[np.float64]) -> NDArray[np.float64]:
        phi = np.arctan2(rel[..., 1], rel[..., 0])
        sector = 1.0 - params.infarct_weight * np.exp(
            _SECTOR_CONCENTRATION * (np.cos(phi - params.infarct_angle_rad) - 1.0)
        )
        return 1.0 + amp * sector * _bump(r, geo.sigma_lv) * _bump(
            rel[..., 2], geo.sigma_z
        )

    return scale


def _rv_scale(params: PhantomParams, geo: _Geometry, m: float) -> _RayFn:
    amp = params.rv_contraction_amplitude * m

    def scale(r: NDArray[np.float64], rel: NDArray[np.float64]) -> NDArray[np.float64]:
        return 1.0 + amp * _bump(r, geo.sigma_rv) * _bump(rel[..., 2], geo.sigma_z)

    return scale


def _twist_angle(params: PhantomParams, geo: _Geometry, m: float) -> _RayFn:
    amp = params.twist_amplitude_rad * m

    def angle(r: NDArray[np.float64], rel: NDArray[np.float64]) -> NDArray[np.float64]:
        dz = rel[..., 2]
        return (
            amp
            * (dz / geo.half_length)
            * _bump(dz, geo.sigma_z)
            * _bump(r, geo.sigma_lv)
        )

    return angle


def _radial_apply(
    points: NDArray[np.float64], centre: NDArray[np.float64], scale: _RayFn
) -> NDArray[np.float64]:
    rel = points - centre
    r = np.hypot(rel[..., 0], rel[..., 1])
    out = points.copy()
    out[..., :2] = centre[:2] + rel[..., :2] * scale(r, rel)[..., None]
    return out


def _radial_invert(
    points: NDArray[np.float64], centre: NDArray[np.float64], scale: _RayFn
) -> NDArray[np.float64]:
    # r * scale(r) is increasing along each ray and scale >= 1, so the
    # preimage radius lies in [0, R].
    rel = points - centre
    big_r = np.hypot(rel[..., 0], rel[..., 1])
    lo = np.zeros_like(big_r)
    hi = big_r.copy()
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        beyond = mid * scale(mid, rel) > big_r
        hi = np.where(beyond, mid, hi)
        lo = np.where(beyond, lo, mid)
    r = 0.5 * (lo + hi)
    ratio = np.divide(r, big_r, out=np.ones_like(r), where=big_r > 0)
    out = points.copy()
    out[..., :2] = centre[:2] + rel[..., :2] * ratio[..., None]
    return out


def _rotate(
    points: NDArray[np.float64],
    centre: NDArray[np.float64],
    angle: _RayFn,
    sign: float,
) -> NDArray[np.float64]:
    rel = points - centre
    r = np.hypot(rel[..., 0], rel[..., 1])
    theta = sign * angle(r, rel)
    c, s = np.cos(theta), np.sin(theta)
    out = points.copy()
    out[..., 0] = centre[0] + c * rel[..., 0] - s * rel[..., 1]
    out[..., 1] = centre[1] + s * rel[..., 0] + c * rel[..., 1]
    return out


def backward_map(
    params: PhantomParams, t: int, points: ArrayLike
) -> NDArray[np.float64]:
    """Map points of frame ``t`` to their reference (frame 0) positions.

    :param params: Phantom parameters.
    :param t: Frame index.
    :param points: Physical points, last axis = xyz.
    :returns: Reference positions with the same shape.
    """
    p = np.array(points, dtype=np.float64)
    m = params.cycle(t)
    if m == 0.0:
        return p
    geo = _geometry(params)
    if params.twist_amplitude_rad != 0.0:
        p = _rotate(p, geo.centre, _twist_angle(params, geo, m), 1.0)
    if params.contraction_amplitude != 0.0:
        p = _radial_apply(p, geo.centre, _lv_scale(params, geo, m))
    if params.rv_contraction_amplitude != 0.0:
        p = _radial_apply(p, geo.rv_centre, _rv_scale(params, geo, m))
    return p


def forward_map(
    params: PhantomParams, t: int, points: ArrayLike
) -> NDArray[np.float64]:
    """Map reference points to their positions in frame ``t``.

    Inverse of :func:`backward_map`.

    :param params: Phantom parameters.
    :param t: Frame index.
    :param points: Reference points, last axis = xyz.
    :returns: Positions in frame ``t``.
    """
    p = np.array(points, dtype=np.float64)
    m = params.cycle(t)
    if m == 0.0:
        return p
    geo = _geometry(params)
    if params.rv_contraction_amplitude != 0.0:
        p = _radial_invert(p, geo.rv_centre, _rv_scale(params, geo, m))
    if params.contraction_amplitude != 0.0:
        p = _radial_invert(p, geo.centre, _lv_scale(params, geo, m))
    if params.twist_amplitude_rad != 0.0:
        p = _rotate(p, geo.centre, _twist_angle(params, geo, m), -1.0)
    return p


def analytic_field(
    params: PhantomParams, t_from: int, t_to: int
) -> _types.DisplacementField3:
    """Ground-truth displacement relating two frames.

    The field lives on frame ``t_to``: ``u(x) = psi_from^-1(psi_to(x)) - x``.
    Warping frame ``t_from`` with it reproduces frame ``t_to``, so it is the
    field :func:`cardiomech.registration.register` estimates with
    ``fixed = frame t_to`` and ``moving = frame t_from``.

    :param params: Phantom parameters.
    :param t_from: Source (moving) frame.
    :param t_to: Target (fixed) frame.
    :returns: Displacement field in mm.
    :raises ValidationError: If a frame index is out of range.
    """
    for t in (t_from, t_to):
        if not 0 <= t < params.frames:
            raise ValidationError(f"frame {t} outside 0..{params.frames - 1}")
    grid = params.grid
    if t_from == t_to:
        return _types.DisplacementField3.zeros(grid)
    x = grid.physical_points()
    y = forward_map(params, t_from, backward_map(params, t_to, x))
    return _types.DisplacementField3(grid, (y - x).astype(np.float32))


def _anatomy_masks(
    geo: _Geometry, points: NDArray[np.float64]
) -> tuple[NDArray[np.bool_], NDArray[np.bool_], NDArray[np.bool_]]:
    rel = points - geo.centre
    rl = np.hypot(rel[..., 0], rel[..., 1])
    dz = np.abs(rel[..., 2])
    rel_rv = points - geo.rv_centre
    rr = np.hypot(rel_rv[..., 0], rel_rv[..., 1])
    cavity = (rl < geo.inner) & (dz < geo.half_length)
    lv = (rl < geo.outer) & (dz < geo.half_length + geo.cap)
    rv = (rr < geo.rv_radius) & (dz < geo.rv_half_length) & ~lv
    return cavity, lv & ~cavity, rv


def _anatomy_intensity(
    geo: _Geometry, points: NDArray[np.float64], width: float
) -> NDArray[np.float64]:
    rel = points - geo.centre
    rl = np.hypot(rel[..., 0], rel[..., 1])
    dz = np.abs(rel[..., 2])
    rel_rv = points - geo.rv_centre
    rr = np.hypot(rel_rv[..., 0], rel_rv[..., 1])
    cavity = expit((geo.inner - rl) / width) * expit((geo.half_length - dz) / width)
    lv = expit((geo.outer - rl) / width) * expit(
        (geo.half_length + geo.cap - dz) / width
    )
    rv = (
        expit((geo.rv_radius - rr) / width)
        * expit((geo.rv_half_length - dz) / width)
        * (1.0 - lv)
    )
    return (
        INTENSITY_BACKGROUND
        + (INTENSITY_MYOCARDIUM - INTENSITY_BACKGROUND) * lv
        + (INTENSITY_LV_BLOOD - INTENSITY_MYOCARDIUM) * cavity
        + (INTENSITY_RV_BLOOD - INTENSITY_BACKGROUND) * rv
    )


def _texture(params: PhantomParams, rng: np.random.Generator) -> NDArray[np.float64]:
    tex = ndimage.gaussian_filter(
        rng.standard_normal(params.dims), params.texture_sigma_vox, mode="wrap"
    )
    return tex / max(float(tex.std()), 1e-12)


def _render(
    params: PhantomParams,
    geo: _Geometry,
    texture: NDArray[np.float64],
    points: NDArray[np.float64],
) -> NDArray[np.float64]:
    grid = params.grid
    coords = np.moveaxis(grid.to_voxel(points), -1, 0)
    tex = ndimage.map_coordinates(texture, coords, order=3, mode="nearest")
    anatomy = _anatomy_intensity(geo, points, 0.5 * min(grid.spacing))
    return anatomy * (1.0 + params.texture_contrast * tex)


def _labels(
    grid: _types.Grid, geo: _Geometry, points: NDArray[np.float64]
) -> _types.LabelMap3:
    cavity, myo, rv = _anatomy_masks(geo, points)
    return _features.split_acdc_labels(
        _types.LabelMap3(grid, cavity.astype(np.uint8)),
        _types.LabelMap3(grid, myo.astype(np.uint8)),
        _types.LabelMap3(grid, rv.astype(np.uint8)),
    )


def _check_margin(labels: _types.LabelMap3, frame: int) -> None:
    idx = np.nonzero(labels.data)
    for axis, n in enumerate(labels.grid.dims):
        lo, hi = int(idx[axis].min()), int(idx[axis].max())
        if lo < MARGIN_VOXELS or hi > n - 1 - MARGIN_VOXELS:
            raise ValidationError(
                f"phantom anatomy of frame {frame} comes within {MARGIN_VOXELS} "
                f"voxels of the volume boundary along axis {axis}"
            )


@dataclass(frozen=True, eq=False)
class PhantomCase:
    """Generated phantom case.

    :param case_id: Identifier.
    :param class_label: Class the case represents.
    :param params: Parameters it was generated from.
    :param seed: Texture and noise seed.
    :param sequence: Cine frames with ED (frame 0) and ES labels.
    :param frame_labels: Label map of every frame.
    """

    case_id: str
    class_label: str
    params: PhantomParams
    seed: int
    sequence: _types.CineSequence
    frame_labels: tuple[_types.LabelMap3, ...]

    def field(self, t_from: int, t_to: int) -> _types.DisplacementField3:
        """Ground-truth field from frame ``t_from`` onto frame ``t_to``.

        :param t_from: Source frame.
        :param t_to: Target frame.
        :returns: Displacement field.
        """
        return analytic_field(self.params, t_from, t_to)


def generate_case(
    params: PhantomParams | None = None,
    seed: int = 0,
    *,
    case_id: str | None = None,
) -> PhantomCase:
    """Render a phantom cine sequence.

    Frame ``t`` samples the reference intensity at ``psi_t(x)`` and adds
    independent noise; labels are evaluated analytically at the same points.

    :param params: Phantom parameters; defaults when None.
    :param seed: Texture and noise seed.
    :param case_id: Identifier; derived from the preset and seed when None.
    :returns: The case.
    :raises ValidationError: If the anatomy comes too close to the boundary.
    """
    params = params or PhantomParams()
    rng = np.random.default_rng(seed)
    grid = params.grid
    geo = _geometry(params)
    texture = _texture(params, rng)
    x = grid.physical_points()
    frames: list[_types.Volume3] = []
    labels: list[_types.LabelMap3] = []
    for t in range(params.frames):
        ref = backward_map(params, t, x)
        data = _render(params, geo, texture, ref)
        if params.noise_sigma > 0:
            data = data + rng.normal(0.0, params.noise_sigma, grid.dims)
        frames.append(_types.Volume3(grid, data.astype(np.float32)))
        lab = _labels(grid, geo, ref)
        _check_margin(lab, t)
        labels.append(lab)
    es = params.es_index
    sequence = _types.CineSequence(tuple(frames), 0, es, labels[0], labels[es])
    case_id = case_id or f"{params.class_preset.lower()}_{seed}"
    _LOGGER.debug("generated phantom case %s (%d frames)", case_id, params.frames)
    return PhantomCase(
        case_id=case_id,
        class_label=params.class_preset,
        params=params,
        seed=seed,
        sequence=sequence,
        frame_labels=tuple(labels),
    )


def translation_pair(
    params: PhantomParams | None = None,
    shift_mm: Sequence[float] = (3.0, 0.0, 0.0),
    seed: int = 0,
) -> tuple[_types.Volume3, _types.Volume3, _types.DisplacementField3]:
    """Render the reference anatomy and a copy moved by a uniform shift.

    :param params: Phantom parameters; motion amplitudes are ignored.
    :param shift_mm: Translation of the moving image in mm.
    :param seed: Texture and noise seed.
    :returns: ``(fixed, moving, true field)``; the true field equals
        ``shift_mm`` everywhere.
    """
    params = params or PhantomParams()
    rng = np.random.default_rng(seed)
    grid = params.grid
    geo = _geometry(params)
    texture = _texture(params, rng)
    x = grid.physical_points()
    shift = np.asarray(shift_mm, dtype=np.float64)
    out: list[_types.Volume3] = []
    for pts in (x, x - shift):
        data = _render(params, geo, texture, pts)
        if params.noise_sigma > 0:
            data = data + rng.normal(0.0, params.noise_sigma, grid.dims)
        out.append(_types.Volume3(grid, data.astype(np.float32)))
    return out[0], out[1], _types.DisplacementField3.constant(grid, shift.tolist())


def apply_preset(
    params: PhantomParams,
    preset: str,
    rng: np.random.Generator | None = None,
) -> PhantomParams:
    """Turn baseline parameters into a class preset.

    * ``NOR``: unchanged.
    * ``MINF``: contraction halved in one sector.
    * ``DCM``: cavity radius x1.4 with the wall kept, contraction x0.6.
    * ``HCM``: wall thickness x1.8.
    * ``RV``: RV radius x1.5, RV contraction x0.5.

    With ``rng``, cavity radius, wall thickness, RV radius and the three
    motion amplitudes are each jittered by up to 10%.

    :param params: Baseline parameters.
    :param preset: Class name.
    :param rng: Jitter source; no jitter when None.
    :returns: Preset parameters.
    :raises ValidationError: On an unknown preset.
    """
    if preset not in _types.ACDC_CLASSES:
        raise ValidationError(f"unknown class preset {preset!r}")
    inner = params.lv_inner_radius_mm
    wall = params.lv_outer_radius_mm - params.lv_inner_radius_mm
    rv_radius = params.rv_radius_mm
    contraction = params.contraction_amplitude
    rv_contraction = params.rv_contraction_amplitude
    twist = params.twist_amplitude_rad
    infarct = params.infarct_weight
    wall_scale = params.wall_thickness_scale
    if preset == "MINF":
        infarct = 0.5
    elif preset == "DCM":
        inner *= 1.4
        contraction *= 0.6
    elif preset == "HCM":
        wall_scale *= 1.8
    elif preset == "RV":
        rv_radius *= 1.5
        rv_contraction *= 0.5
    if rng is not None:
        jitter = rng.uniform(1.0 - _JITTER, 1.0 + _JITTER, size=6)
        inner *= jitter[0]
        wall *= jitter[1]
        rv_radius *= jitter[2]
        contraction *= jitter[3]
        rv_contraction *= jitter[4]
        twist *= jitter[5]
    return replace(
        params,
        lv_inner_radius_mm=float(inner),
        lv_outer_radius_mm=float(inner + wall),
        rv_radius_mm=float(rv_radius),
        contraction_amplitude=float(min(contraction, 0.99)),
        rv_contraction_amplitude=float(min(rv_contraction, 0.99)),
        twist_amplitude_rad=float(twist),
        infarct_weight=infarct,
        wall_thickness_scale=wall_scale,
        class_preset=preset,
    )


def generate_cohort(
    n_per_class: int,
    base_params: PhantomParams | None = None,
    seed: int = 0,
    *,
    classes: Sequence[str] = _types.ACDC_CLASSES,
    max_workers: int | None = None,
) -> list[PhantomCase]:
    """Generate a balanced cohort with jittered class presets.

    Cases are ordered by class, then by index within the class.

    :param n_per_class: Cases per class.
    :param base_params: Baseline (NOR) parameters.
    :param seed: Cohort seed; every case derives its own seed from it.
    :param classes: Classes to generate.
    :param max_workers: Thread pool size; None lets the executor decide.
    :returns: Generated cases.
    :raises ValidationError: If ``n_per_class`` < 1 or a case is invalid.
    """
    if n_per_class < 1:
        raise ValidationError(f"n_per_class must be >= 1, got {n_per_class}")
    base = base_params or PhantomParams()
    seeds = np.random.SeedSequence(seed).generate_state(len(classes) * n_per_class)
    jobs: list[tuple[str, PhantomParams, int]] = []
    for ci, cls in enumerate(classes):
        for i in range(n_per_class):
            case_seed = int(seeds[ci * n_per_class + i])
            params = apply_preset(base, cls, np.random.default_rng([case_seed, 1]))
            jobs.append((f"{cls.lower()}_{i:03d}", params, case_seed))

    def run(job: tuple[str, PhantomParams, int]) -> PhantomCase:
        return generate_case(job[1], job[2], case_id=job[0])

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        cases = list(pool.map(run, jobs))
    _LOGGER.info("generated %d phantom case(s)", len(cases))
    return cases


__all__ = [
    "MARGIN_VOXELS",
    "PhantomCase",
    "PhantomParams",
    "analytic_field",
    "apply_preset",
    "backward_map",
    "forward_map",
    "generate_case",
    "generate_cohort",
    "translation_pair",
]
