"""Label propagation across cine frames and local weighted voting.

Labels move from a source frame to a destination frame by registering the
destination (fixed) against the source (moving) and warping the source labels
with the resulting field. Multi-frame segmentation propagates the annotated
phase to its neighbouring frames, propagates every labelled frame onto the
target phase and fuses the candidates voxel by voxel, weighting each vote by
the local correlation between the warped candidate frame and the target.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

import cardiomech.registration as _registration
import cardiomech.similarity as _similarity
import cardiomech.types as _types
import cardiomech.volgrid as _volgrid
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

LV_CAVITY = 3
RV_CAVITY = 5
MYOCARDIUM = (1, 2, 4)


def _overlap(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def dice(a: _types.LabelMap3, b: _types.LabelMap3, label: int) -> float:
    """Dice coefficient of one label; 1 when the label is absent from both.

    :param a: First label map.
    :param b: Second label map.
    :param label: Label to compare.
    :returns: Value in ``[0, 1]``.
    :raises GridMismatchError: If the grids differ.
    """
    a.grid.require_same(b.grid, "label maps")
    return _overlap(a.data == label, b.data == label)


def anatomical_dice(a: _types.LabelMap3, b: _types.LabelMap3) -> dict[str, float]:
    """Dice of the LV cavity, RV cavity and merged myocardium.

    :param a: First label map.
    :param b: Second label map.
    :returns: Mapping with keys ``LV``, ``RV`` and ``MYO``.
    :raises GridMismatchError: If the grids differ.
    """
    a.grid.require_same(b.grid, "label maps")
    return {
        "LV": _overlap(a.data == LV_CAVITY, b.data == LV_CAVITY),
        "RV": _overlap(a.data == RV_CAVITY, b.data == RV_CAVITY),
        "MYO": _overlap(np.isin(a.data, MYOCARDIUM), np.isin(b.data, MYOCARDIUM)),
    }


def propagate_with_field(
    labels: _types.LabelMap3, field: _types.DisplacementField3
) -> _types.LabelMap3:
    """Propagate labels with a known field (destination points to source).

    :param labels: Source labels.
    :param field: Field on the destination grid.
    :returns: Labels on the destination frame.
    """
    return _volgrid.warp_labels(labels, field)


def propagate(
    seq: _types.CineSequence,
    src_frame: int,
    dst_frame: int,
    cfg: _types.RegConfig | None = None,
    *,
    src_labels: _types.LabelMap3 | None = None,
) -> tuple[_types.LabelMap3, _types.DisplacementField3]:
    """Propagate labels from one frame to another by registration.

    :param seq: Cine sequence.
    :param src_frame: Index of the labelled frame.
    :param dst_frame: Index of the frame to label.
    :param cfg: Registration settings.
    :param src_labels: Labels of ``src_frame``; defaults to the annotation
        when ``src_frame`` is ED or ES.
    :returns: ``(labels on dst_frame, field)``.
    :raises ValidationError: If the source frame has no labels or an index
        is out of range.
    """
    n = len(seq.frames)
    for name, idx in (("src_frame", src_frame), ("dst_frame", dst_frame)):
        if not 0 <= idx < n:
            raise ValidationError(f"{name} {idx} outside 0..{n - 1}")
    labels = src_labels if src_labels is not None else seq.labels_for_frame(src_frame)
    if labels is None:
        raise ValidationError(f"frame {src_frame} has no labels to propagate")
    result = _registration.register(
        seq.frames[dst_frame], seq.frames[src_frame], cfg
    )
    _LOGGER.info(
        "propagated frame %d -> %d (loss %.4g -> %.4g)",
        src_frame,
        dst_frame,
        result.initial_loss,
        result.final_loss,
    )
    return _volgrid.warp_labels(labels, result.field), result.field


def lwv_weights(
    target: _types.Volume3,
    candidates: Sequence[tuple[_types.Volume3, _types.LabelMap3]],
    window: int = 5,
    eps: float = 1e-5,
) -> list[_types.Volume3]:
    """Local correlation weight map of every candidate.

    :param target: Target frame.
    :param candidates: ``(warped frame, warped labels)`` pairs.
    :param window: Odd correlation window.
    :param eps: Variance guard.
    :returns: One weight map per candidate.
    """
    return [_similarity.lncc_map(target, frame, window, eps) for frame, _ in candidates]


def lwv_fuse(
    target: _types.Volume3,
    candidates: Sequence[tuple[_types.Volume3, _types.LabelMap3]],
    window: int = 5,
    eps: float = 1e-5,
) -> _types.LabelMap3:
    """Fuse candidate labelings by locally weighted voting.

    Ties go to the smaller label value. Voxels where every weight is zero
    take the unweighted majority of the candidates.

    :param target: Target frame.
    :param candidates: ``(warped frame, warped labels)`` pairs.
    :param window: Odd correlation window.
    :param eps: Variance guard.
    :returns: Fused labels.
    :raises ValidationError: If no candidate is given.
    :raises GridMismatchError: If a candidate lives on another grid.
    """
    if not candidates:
        raise ValidationError("lwv_fuse needs at least one candidate")
    for frame, labels in candidates:
        target.grid.require_same(frame.grid, "target and candidate frame")
        target.grid.require_same(labels.grid, "target and candidate labels")
    if len(candidates) == 1:
        return candidates[0][1]
    weights = lwv_weights(target, candidates, window, eps)
    values = np.unique(np.concatenate([lab.data.ravel() for _, lab in candidates]))
    votes = np.zeros((values.size, *target.grid.dims), dtype=np.float64)
    counts = np.zeros_like(votes)
    for (_, labels), weight in zip(candidates, weights, strict=True):
        for i, value in enumerate(values):
            hit = labels.data == value
            votes[i] += np.where(hit, weight.data, 0.0)
            counts[i] += hit
    votes = np.where(votes.sum(axis=0) > 0.0, votes, counts)
    fused = values[np.argmax(votes, axis=0)]
    return _types.LabelMap3(target.grid, fused)


@dataclass(frozen=True, eq=False)
class Candidate:
    """One atlas propagated onto the target frame.

    :param frame_index: Frame the atlas labels came from.
    :param warped_frame: That frame warped onto the target.
    :param warped_labels: Its labels warped onto the target.
    """

    frame_index: int
    warped_frame: _types.Volume3
    warped_labels: _types.LabelMap3


def neighbour_frames(
    n_frames: int, source: int, target: int, n_adjacent: int
) -> list[int]:
    """Return the ``n_adjacent`` frames nearest to ``source``.

    Offsets are tried in the order -1, +1, -2, +2, ...; indices outside the
    sequence or equal to ``target`` are skipped. Fewer frames are returned when
    the sequence is too short.

    :param n_frames: Sequence length.
    :param source: Source frame index.
    :param target: Target frame index.
    :param n_adjacent: Number of neighbours wanted.
    :returns: Neighbour indices, nearest first.
    """
    out: list[int] = []
    for d in range(1, n_frames):
        for idx in (source - d, source + d):
            if len(out) == n_adjacent:
                return out
            if not 0 <= idx < n_frames or idx == target:
                _LOGGER.debug("skipping neighbour frame %d of frame %d", idx, source)
                continue
            out.append(idx)
    if len(out) < n_adjacent:
        _LOGGER.warning(
            "only %d of %d neighbour frame(s) available around frame %d",
            len(out),
            n_adjacent,
            source,
        )
    return out


def multi_frame_candidates(  # noqa: PLR0913
    seq: _types.CineSequence,
    target: _types.Phase,
    n_adjacent: int = 2,
    cfg: _types.RegConfig | None = None,
    *,
    include_source: bool = True,
    max_workers: int | None = None,
) -> list[Candidate]:
    """Propagate the other phase and its neighbours onto the target phase.

    Every neighbour is labelled by propagation from the source phase and then
    propagated onto the target with a second registration.

    :param seq: Cine sequence.
    :param target: Phase to segment.
    :param n_adjacent: Number of neighbour frames used as atlases.
    :param cfg: Registration settings.
    :param include_source: Also propagate the source phase directly.
    :param max_workers: Thread count for independent candidates.
    :returns: Candidates in atlas order (source first).
    :raises ValidationError: If no atlas remains.
    """
    if n_adjacent < 1:
        raise ValidationError(f"n_adjacent must be >= 1, got {n_adjacent}")
    source_phase: _types.Phase = "es" if target == "ed" else "ed"
    src = seq.phase_index(source_phase)
    dst = seq.phase_index(target)
    neighbours = neighbour_frames(len(seq.frames), src, dst, n_adjacent)
    atlases = ([src] if include_source else []) + neighbours
    if not atlases:
        raise ValidationError("every neighbour frame was skipped")
    target_frame = seq.frames[dst]

    def _one(index: int) -> Candidate:
        if index == src:
            labels = seq.phase_labels(source_phase)
        else:
            labels, _ = propagate(seq, src, index, cfg)
        result = _registration.register(target_frame, seq.frames[index], cfg)
        return Candidate(
            frame_index=index,
            warped_frame=_volgrid.warp_volume(seq.frames[index], result.field),
            warped_labels=_volgrid.warp_labels(labels, result.field),
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_one, atlases))


def multi_frame_segment(  # noqa: PLR0913
    seq: _types.CineSequence,
    target: _types.Phase,
    n_adjacent: int = 2,
    cfg: _types.RegConfig | None = None,
    *,
    window: int = 5,
    include_source: bool = True,
    max_workers: int | None = None,
) -> _types.LabelMap3:
    """Segment a phase by fusing labels propagated from several frames.

    :param seq: Cine sequence.
    :param target: Phase to segment.
    :param n_adjacent: Number of neighbour frames used as atlases.
    :param cfg: Registration settings.
    :param window: Voting correlation window.
    :param include_source: Also propagate the source phase directly.
    :param max_workers: Thread count for independent candidates.
    :returns: Fused labels of the target phase.
    :raises ValidationError: If no atlas remains.
    """
    candidates = multi_frame_candidates(
        seq,
        target,
        n_adjacent,
        cfg,
        include_source=include_source,
        max_workers=max_workers,
    )
    _LOGGER.info(
        "fusing %d candidate(s) from frames %s",
        len(candidates),
        [c.frame_index for c in candidates],
    )
    return lwv_fuse(
        seq.frames[seq.phase_index(target)],
        [(c.warped_frame, c.warped_labels) for c in candidates],
        window,
    )


__all__ = [
    "LV_CAVITY",
    "MYOCARDIUM",
    "RV_CAVITY",
    "Candidate",
    "anatomical_dice",
    "dice",
    "lwv_fuse",
    "lwv_weights",
    "multi_frame_candidates",
    "multi_frame_segment",
    "neighbour_frames",
    "propagate",
    "propagate_with_field",
]
