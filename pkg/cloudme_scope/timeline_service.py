"""
Timeline Service
================

Normalization entry points shared by every parser and the merge that turns
per-artefact event streams into one timeline.
"""

import pytz
from datetime import datetime
from typing import Iterable, List, Sequence, Set, Tuple

from cloudme_scope.models import ForensicEvent
from cloudme_scope.utils.timestamps import normalize_timestamp, parse_any_timestamp

__all__ = ["merge_event_streams", "normalize_timestamp", "parse_any_timestamp"]


_UNDATED = datetime.max.replace(tzinfo=pytz.UTC)


def _sort_key(item: Tuple[int, ForensicEvent]) -> Tuple[int, datetime, int]:
    position, event = item
    if event.time is None:
        return (1, _UNDATED, position)
    return (0, event.time.instant, position)


def merge_event_streams(
    streams: Sequence[Iterable[ForensicEvent]],
) -> List[ForensicEvent]:
    """
    Merge event streams into one ascending timeline

    Undated events go last; ties keep input order (stream order, then position
    within the stream). Exact duplicates collapse to their first occurrence.
    """
    seen: Set[ForensicEvent] = set()
    ordered: List[Tuple[int, ForensicEvent]] = []
    for stream in streams:
        for event in stream:
            if event in seen:
                continue
            seen.add(event)
            ordered.append((len(ordered), event))

    ordered.sort(key=_sort_key)
    return [event for _, event in ordered]
