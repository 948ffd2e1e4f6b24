"""
Timestamp grammars found in CloudMe evidence.

cache.db and the daily logs store zone-less datetimes; they are read as UTC,
the same zone the web-cache documents spell out with their ``Z`` suffix.
"""

import re
import pytz
from datetime import datetime, timedelta
from typing import Optional, Union

from cloudme_scope.exceptions import UnparsableTimestamp
from cloudme_scope.models import Timestamp, TimestampHint

UTC_ASSUMPTION = (
    "cache.db, db.sdb and log datetimes carry no zone and are interpreted as UTC"
)

_EPOCH = datetime(1970, 1, 1, tzinfo=pytz.UTC)
_WEBKIT_EPOCH = datetime(1601, 1, 1, tzinfo=pytz.UTC)

_GRAMMARS = {
    TimestampHint.SQLITE_DATETIME: re.compile(
        r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$"
    ),
    TimestampHint.ISO8601_Z: re.compile(
        r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?Z$"
    ),
    # the daily log prefix, with or without the separating colon
    TimestampHint.LOG_PREFIX: re.compile(
        r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?:?$"
    ),
}

_EPOCH_MILLIS = re.compile(r"^\d{1,15}$")

# Order used when the grammar of a value is unknown
FALLBACK_ORDER = (
    TimestampHint.SQLITE_DATETIME,
    TimestampHint.ISO8601_Z,
    TimestampHint.LOG_PREFIX,
    TimestampHint.EPOCH_MILLIS,
)


def _from_match(match: "re.Match[str]", raw: str, hint: TimestampHint) -> Timestamp:
    year, month, day, hour, minute, second, fraction = match.groups()
    micros = int((fraction or "0").ljust(6, "0"))
    try:
        instant = datetime(
            int(year),
            int(month),
            int(day),
            int(hour),
            int(minute),
            int(second),
            micros,
            tzinfo=pytz.UTC,
        )
    except ValueError:
        raise UnparsableTimestamp(raw, hint.value)
    return Timestamp(instant=instant, raw=raw)


def normalize_timestamp(raw: str, hint: TimestampHint) -> Timestamp:
    if not raw:
        raise UnparsableTimestamp(raw, hint.value)

    if hint == TimestampHint.EPOCH_MILLIS:
        if not _EPOCH_MILLIS.match(raw):
            raise UnparsableTimestamp(raw, hint.value)
        try:
            instant = _EPOCH + timedelta(milliseconds=int(raw))
        except OverflowError:
            raise UnparsableTimestamp(raw, hint.value)
        return Timestamp(instant=instant, raw=raw)

    match = _GRAMMARS[hint].match(raw)
    if match is None:
        raise UnparsableTimestamp(raw, hint.value)
    return _from_match(match, raw, hint)


def parse_any_timestamp(raw: str) -> Timestamp:
    """Try every grammar in ``FALLBACK_ORDER``; first success wins."""
    for hint in FALLBACK_ORDER:
        try:
            return normalize_timestamp(raw, hint)
        except UnparsableTimestamp:
            continue
    raise UnparsableTimestamp(raw)


def optional_timestamp(
    raw: Optional[Union[str, int, float]], hint: TimestampHint
) -> Optional[Timestamp]:
    """None for NULL columns; raises for present but malformed values."""
    if raw is None or raw == "":
        return None
    return normalize_timestamp(str(raw), hint)


def timestamp_from_epoch_seconds(value: Union[int, float], raw: str) -> Timestamp:
    try:
        instant = _EPOCH + timedelta(seconds=float(value))
    except (OverflowError, ValueError):
        raise UnparsableTimestamp(raw, "EpochSeconds")
    return Timestamp(instant=instant, raw=raw)


def timestamp_from_webkit_micros(value: int) -> Timestamp:
    """Chrome history: microseconds since 1601-01-01 UTC."""
    try:
        instant = _WEBKIT_EPOCH + timedelta(microseconds=int(value))
    except (OverflowError, ValueError):
        raise UnparsableTimestamp(str(value), "WebKitMicros")
    return Timestamp(instant=instant, raw=str(value))


def timestamp_from_unix_micros(value: int) -> Timestamp:
    """Firefox history: microseconds since the Unix epoch."""
    try:
        instant = _EPOCH + timedelta(microseconds=int(value))
    except (OverflowError, ValueError):
        raise UnparsableTimestamp(str(value), "UnixMicros")
    return Timestamp(instant=instant, raw=str(value))


def timestamp_from_datetime(value: datetime, raw: Optional[str] = None) -> Timestamp:
    instant = value if value.tzinfo else pytz.UTC.localize(value)
    return Timestamp(instant=instant.astimezone(pytz.UTC), raw=raw or value.isoformat())
