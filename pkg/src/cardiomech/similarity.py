"""Windowed local normalized cross-correlation.

For every voxel the squared correlation of the two images over a cubic window
is

    cc = A**2 / ((B + eps) * (C + eps))

with ``A`` the windowed covariance sum and ``B``, ``C`` the windowed variance
sums. Windows are truncated at the volume boundary: sums run over in-volume
voxels and means divide by the in-volume count.
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)


def box_sum(data: NDArray[np.float64], window: int) -> NDArray[np.float64]:
    """Sum over a cubic window centred at every voxel, truncated at the border.

    :param data: Array to sum.
    :param window: Odd window edge length.
    :returns: Windowed sums.
    """
    return ndimage.uniform_filter(data, size=window, mode="constant", cval=0.0) * float(
        window**3
    )


def _check_window(window: int) -> None:
    if window < 3 or window % 2 == 0:  # noqa: PLR2004
        raise ValidationError(f"window must be odd and >= 3, got {window}")


class _WindowStats:
    """Windowed sums shared by the map and its gradient."""

    def __init__(
        self,
        fixed: NDArray[np.float64],
        warped: NDArray[np.float64],
        window: int,
        eps: float,
    ) -> None:
        self.window = window
        self.count = box_sum(np.ones_like(fixed), window)
        sf = box_sum(fixed, window)
        sw = box_sum(warped, window)
        self.mean_f = sf / self.count
        self.mean_w = sw / self.count
        self.a = box_sum(fixed * warped, window) - sf * self.mean_w
        self.b = np.maximum(box_sum(fixed * fixed, window) - sf * self.mean_f, 0.0)
        self.c = np.maximum(box_sum(warped * warped, window) - sw * self.mean_w, 0.0)
        self.den = (self.b + eps) * (self.c + eps)
        self.valid = self.den > 0.0

    def cc(self) -> NDArray[np.float64]:
        out = np.divide(
            self.a * self.a,
            self.den,
            out=np.zeros_like(self.a),
            where=self.valid,
        )
        return np.clip(out, 0.0, 1.0)

    def gradient_sum(
        self, fixed: NDArray[np.float64], warped: NDArray[np.float64], eps: float
    ) -> NDArray[np.float64]:
        """Derivative of ``sum_p cc(p)`` with respect to every warped voxel."""
        alpha = np.divide(
            2.0 * self.a, self.den, out=np.zeros_like(self.a), where=self.valid
        )
        beta = np.divide(
            -(self.a * self.a),
            self.den * (self.c + eps),
            out=np.zeros_like(self.a),
            where=self.valid,
        )
        w = self.window
        return (
            fixed * box_sum(alpha, w)
            - box_sum(alpha * self.mean_f, w)
            + 2.0 * warped * box_sum(beta, w)
            - 2.0 * box_sum(beta * self.mean_w, w)
        )


def lncc_array(
    fixed: NDArray[np.floating],
    warped: NDArray[np.floating],
    window: int,
    eps: float = 1e-5,
) -> NDArray[np.float64]:
    """Squared local correlation map of two raw arrays.

    :param fixed: First image.
    :param warped: Second image, same shape.
    :param window: Odd window edge length, at least 3.
    :param eps: Variance guard.
    :returns: Values in ``[0, 1]``.
    :raises ValidationError: On an invalid window.
    """
    _check_window(window)
    f = np.asarray(fixed, dtype=np.float64)
    w = np.asarray(warped, dtype=np.float64)
    return _WindowStats(f, w, window, eps).cc()


def lncc_map(
    fixed: _types.Volume3,
    warped: _types.Volume3,
    window: int,
    eps: float = 1e-5,
) -> _types.Volume3:
    """Squared local normalized cross-correlation per voxel.

    Windows without variance in either image yield 0.

    :param fixed: Reference image.
    :param warped: Compared image on the same grid.
    :param window: Odd window edge length, at least 3.
    :param eps: Variance guard.
    :returns: Map with values in ``[0, 1]``.
    :raises GridMismatchError: If the grids differ.
    :raises ValidationError: On an invalid window.
    """
    fixed.grid.require_same(warped.grid, "fixed and warped images")
    return _types.Volume3(
        fixed.grid, lncc_array(fixed.data, warped.data, window, eps)
    )


def similarity_loss_and_gradient(
    fixed: NDArray[np.floating],
    warped: NDArray[np.floating],
    cfg: _types.SimConfig,
    *,
    with_gradient: bool = True,
) -> tuple[float, NDArray[np.float64]]:
    """Multi-window loss and its derivative with respect to the warped image.

    :param fixed: Reference image.
    :param warped: Warped moving image.
    :param cfg: Window sizes and variance guard.
    :param with_gradient: When False an empty gradient is returned.
    :returns: ``(loss, d loss / d warped)``; the loss lies in ``[-1, 0]``.
    """
    f = np.asarray(fixed, dtype=np.float64)
    w = np.asarray(warped, dtype=np.float64)
    scale = 1.0 / (len(cfg.windows) * f.size)
    loss = 0.0
    grad = np.zeros_like(f) if with_gradient else np.empty((0,), dtype=np.float64)
    for window in cfg.windows:
        stats = _WindowStats(f, w, window, cfg.variance_eps)
        loss -= float(np.sum(stats.cc())) * scale
        if with_gradient:
            grad -= stats.gradient_sum(f, w, cfg.variance_eps) * scale
    return loss, grad


def similarity_loss(
    fixed: _types.Volume3, warped: _types.Volume3, cfg: _types.SimConfig
) -> float:
    """Negative squared local correlation averaged over voxels and windows.

    :param fixed: Reference image.
    :param warped: Compared image on the same grid.
    :param cfg: Window sizes and variance guard.
    :returns: Loss in ``[-1, 0]``.
    :raises GridMismatchError: If the grids differ.
    """
    fixed.grid.require_same(warped.grid, "fixed and warped images")
    loss, _ = similarity_loss_and_gradient(
        fixed.data, warped.data, cfg, with_gradient=False
    )
    return loss


__all__ = [
    "box_sum",
    "lncc_array",
    "lncc_map",
    "similarity_loss",
    "similarity_loss_and_gradient",
]
