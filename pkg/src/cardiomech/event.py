"""Progress event types for the CardioMech public API.

Long-running operations (registration cascades, feature selection, cohort
processing) accept an optional ``on_event`` callback that receives the events
defined here.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from datetime import datetime, timezone

_LOGGER = logging.getLogger(__name__)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(kw_only=True)
class PipelineEvent:
    """Base class for progress events.

    :param timestamp: UTC time at which the event was created.
    """

    timestamp: datetime = field(default_factory=_utc_now)


@dataclass(kw_only=True)
class StageCompleted(PipelineEvent):
    """A registration cascade stage finished.

    :param stage_index: Position of the stage in the cascade.
    :param scale_factor: Pyramid factor of the stage.
    :param iterations_used: Accepted optimizer iterations.
    :param sim_loss: Similarity term at the end of the stage.
    :param nhe_loss: Neo-Hookean term at the end of the stage.
    :param total_loss: Total loss at the end of the stage.
    """

    stage_index: int
    scale_factor: int
    iterations_used: int
    sim_loss: float
    nhe_loss: float
    total_loss: float


@dataclass(kw_only=True)
class SelectionStepRecorded(PipelineEvent):
    """Feature selection tested one tentative move.

    :param step: Running step counter.
    :param feature: Feature that was removed or re-added.
    :param action: ``removed``, ``kept`` or ``readded``.
    :param accuracy: Cross-validated accuracy of the tentative set.
    """

    step: int
    feature: str
    action: str
    accuracy: float


@dataclass(kw_only=True)
class CaseProcessed(PipelineEvent):
    """One case of a cohort finished feature extraction.

    :param case_id: Identifier of the case.
    :param index: Number of cases finished so far.
    :param total: Number of cases in the cohort.
    """

    case_id: str
    index: int
    total: int


EventCallback = Callable[[PipelineEvent], None]


def safe_emit(callback: EventCallback | None, ev: PipelineEvent) -> None:
    """Deliver an event to an optional callback.

    Exceptions raised by the callback are logged and swallowed so user code
    never aborts a computation.

    :param callback: Callback accepting a PipelineEvent, or None.
    :param ev: The event to deliver.
    :returns: None
    """
    if callback is None:
        return
    try:
        callback(ev)
    except Exception:
        _LOGGER.exception("progress callback failed for %s", type(ev).__name__)


__all__ = [
    "CaseProcessed",
    "EventCallback",
    "PipelineEvent",
    "SelectionStepRecorded",
    "StageCompleted",
    "safe_emit",
]
