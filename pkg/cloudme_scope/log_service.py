"""
Log Service
===========

Parses the desktop client's daily log files (``logs/YYYY-MM-DD.txt``) and
classifies their lines. The client only logs errors and logins, so most
evidence here is sync failures carrying the affected path.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, model_validator
from typing import Dict, List, Optional, Sequence, Tuple

from cloudme_scope.exceptions import UnparsableTimestamp, Unreadable
from cloudme_scope.models import (
    ArtefactClass,
    EventKind,
    EvidenceRef,
    ForensicEvent,
    Timestamp,
    TimestampHint,
)
from cloudme_scope.utils.timestamps import normalize_timestamp

logger = logging.getLogger(__name__)

DAILY_LOG_NAME = re.compile(r"^\d{4}-\d{2}-\d{2}\.txt$")

_PREFIX = re.compile(r"^(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}): +(.*)$")
_QUOTED = re.compile(r'"([^"]*)"')
_USERNAME = re.compile(r'Logged in as:\s*"([^"]+)"')
_OPERATION = re.compile(r'Type:\s*"([^"]*)"')
_SYNC_ERROR = re.compile(r'Error:\s*"([^"]*)"')
_DOWNLOAD_URL = re.compile(r"Error downloading\s+(\S+)")
_ERROR_NUMBER = re.compile(r"Error number:\s*(\d+)")
_WEBSHARE_URL = re.compile(
    r"/v1/users/(?P<user_id>\d+)/favorites/(?P<favorite_id>\d+)/webshare/(?P<sync_path>.+)$"
)


class LogEventKind(str, Enum):
    LOGGED_IN = "LoggedIn"
    SYNC_REQUEST_FAILED = "SyncRequestFailed"
    DOWNLOAD_ERROR = "DownloadError"
    LOCAL_FOLDER_OP_FAILED = "LocalFolderOpFailed"
    UNCLASSIFIED = "Unclassified"


class LogEvent(BaseModel):
    """
    One prefixed log line and any unprefixed lines that follow it

    ``time`` is absent only for the preamble event holding lines that appear
    before the first prefixed line.
    """

    model_config = ConfigDict(frozen=True)

    time: Optional[Timestamp] = None
    kind: LogEventKind
    username: Optional[str] = None
    path: Optional[str] = None
    url: Optional[str] = None
    error_code: Optional[str] = None
    operation: Optional[str] = None
    raw_line: str
    continuation: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "LogEvent":
        if self.kind == LogEventKind.LOGGED_IN and not self.username:
            raise ValueError("LoggedIn events carry a username")
        return self

    def lines(self) -> List[str]:
        return [self.raw_line, *self.continuation]


def _first_quoted(text: str) -> Optional[str]:
    match = _QUOTED.search(text)
    return match.group(1) if match else None


def _split_prefix(line: str) -> Tuple[Optional[Timestamp], Optional[str]]:
    match = _PREFIX.match(line.rstrip("\r"))
    if match is None:
        return None, None
    try:
        time = normalize_timestamp(match.group(1), TimestampHint.LOG_PREFIX)
    except UnparsableTimestamp:
        return None, None
    return time, match.group(2)


def classify_log_line(line: str) -> LogEvent:
    """
    Classify one prefixed log line; first matching rule wins

    A line without the ``YYYY-MM-DD HH:MM:SS:`` prefix comes back undated and
    Unclassified.
    """
    time, message = _split_prefix(line)
    if message is None:
        return LogEvent(kind=LogEventKind.UNCLASSIFIED, raw_line=line)

    if "Logged in as:" in message:
        match = _USERNAME.search(message)
        if match:
            return LogEvent(
                time=time,
                kind=LogEventKind.LOGGED_IN,
                username=match.group(1),
                raw_line=line,
            )

    if "onSyncRequestFailed:" in message:
        tail = message.split("onSyncRequestFailed:", 1)[1]
        operation = _OPERATION.search(tail)
        error = _SYNC_ERROR.search(tail)
        return LogEvent(
            time=time,
            kind=LogEventKind.SYNC_REQUEST_FAILED,
            path=_first_quoted(tail),
            operation=operation.group(1) if operation else None,
            error_code=error.group(1) if error else None,
            raw_line=line,
        )

    if "Request error:" in message and "Error downloading" in message:
        url = _DOWNLOAD_URL.search(message)
        error = _ERROR_NUMBER.search(message)
        return LogEvent(
            time=time,
            kind=LogEventKind.DOWNLOAD_ERROR,
            path=_first_quoted(message.split("Request error:", 1)[1]),
            url=url.group(1).rstrip('"') if url else None,
            error_code=error.group(1) if error else None,
            raw_line=line,
        )

    if "addRemoveLocalFolder:Fail" in message:
        tail = message.split("addRemoveLocalFolder:Fail", 1)[1]
        return LogEvent(
            time=time,
            kind=LogEventKind.LOCAL_FOLDER_OP_FAILED,
            path=_first_quoted(tail),
            raw_line=line,
        )

    return LogEvent(time=time, kind=LogEventKind.UNCLASSIFIED, raw_line=line)


def parse_log_text(text: str) -> List[LogEvent]:
    """
    Split log text into events

    Lines are split on ``\\n`` only so a ``\\r`` stays inside ``raw_line``;
    together with :func:`reconstruct_log_text` this keeps parsing lossless.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    events: List[LogEvent] = []
    pending: Optional[LogEvent] = None
    continuation: List[str] = []

    def flush() -> None:
        if pending is not None:
            events.append(pending.model_copy(update={"continuation": tuple(continuation)}))

    for line in lines:
        time, _ = _split_prefix(line)
        if time is None:
            if pending is None:
                pending = LogEvent(kind=LogEventKind.UNCLASSIFIED, raw_line=line)
            else:
                continuation.append(line)
            continue
        flush()
        pending = classify_log_line(line)
        continuation = []
    flush()
    return events


def reconstruct_log_text(events: Sequence[LogEvent]) -> str:
    """Inverse of :func:`parse_log_text`, up to a trailing newline."""
    return "\n".join(line for event in events for line in event.lines())


def parse_log_file(file: Path) -> List[LogEvent]:
    """
    Parse one log file

    Undecodable bytes are carried as surrogate escapes, so re-encoding
    ``reconstruct_log_text`` with ``errors="surrogateescape"`` gives back the
    file's bytes.

    Raises:
        Unreadable: the file cannot be read
    """
    file = Path(file)
    try:
        data = file.read_bytes()
    except OSError as e:
        logger.error(f"Failed to read log file {file}: {e}")
        raise Unreadable(str(file), f"({e.strerror or e})")

    events = parse_log_text(data.decode("utf-8", errors="surrogateescape"))
    logger.info(f"Parsed {file}: {len(events)} log events")
    return events


def parse_log_dir(
    directory: Path, warnings: Optional[List[str]] = None
) -> List[Tuple[Path, List[LogEvent]]]:
    """
    Parse every ``*.txt`` in a logs directory

    Daily ``YYYY-MM-DD.txt`` files come first in name order, then any other
    text files, each with a warning.
    """
    directory = Path(directory)
    warnings = warnings if warnings is not None else []
    candidates = sorted(p for p in directory.glob("*.txt") if p.is_file())
    daily = [p for p in candidates if DAILY_LOG_NAME.match(p.name)]
    others = [p for p in candidates if not DAILY_LOG_NAME.match(p.name)]

    parsed: List[Tuple[Path, List[LogEvent]]] = []
    for file in daily:
        parsed.append((file, parse_log_file(file)))
    for file in others:
        message = f"{file.name} is not named like a daily log; parsed anyway"
        logger.warning(message)
        warnings.append(message)
        parsed.append((file, parse_log_file(file)))
    return parsed


def _failure_attributes(event: LogEvent) -> Dict[str, str]:
    attributes = {"log_kind": event.kind.value}
    if event.operation:
        attributes["operation"] = event.operation
    if event.error_code:
        attributes["error_code"] = event.error_code
    if event.url:
        attributes["url"] = event.url
        webshare = _WEBSHARE_URL.search(event.url)
        if webshare:
            attributes["user_id"] = webshare.group("user_id")
            attributes["favorite_id"] = webshare.group("favorite_id")
            attributes["sync_path"] = webshare.group("sync_path")
    return attributes


def events_from_log(
    events: Sequence[LogEvent], source: Optional[EvidenceRef] = None
) -> List[ForensicEvent]:
    """LoggedIn lines become Login; the three failure kinds become SyncFailed."""
    source = source or EvidenceRef(path="log", artefact_class=ArtefactClass.LOG)
    timeline: List[ForensicEvent] = []
    for event in events:
        if event.kind == LogEventKind.LOGGED_IN:
            timeline.append(
                ForensicEvent(
                    time=event.time, kind=EventKind.LOGIN, actor=event.username, source=source
                )
            )
        elif event.kind in (
            LogEventKind.SYNC_REQUEST_FAILED,
            LogEventKind.DOWNLOAD_ERROR,
            LogEventKind.LOCAL_FOLDER_OP_FAILED,
        ):
            timeline.append(
                ForensicEvent(
                    time=event.time,
                    kind=EventKind.SYNC_FAILED,
                    object=event.path,
                    attributes=_failure_attributes(event),
                    source=source,
                )
            )
    return timeline
