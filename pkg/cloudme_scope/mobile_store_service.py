"""
Mobile Store Service
====================

Android ``db.sdb`` (files / folders) and the iOS ``nsurlcache/Cache.db``
response cache.
"""

import logging
from pathlib import Path
from pydantic import BaseModel, ConfigDict
from typing import Any, Dict, List, Optional, Sequence, Tuple

from cloudme_scope.exceptions import (
    MalformedXml,
    SchemaMismatch,
    UnparsableTimestamp,
    WrongDocType,
)
from cloudme_scope.models import (
    ArtefactClass,
    EventKind,
    EvidenceRef,
    ForensicEvent,
    Timestamp,
    TimestampHint,
)
from cloudme_scope.utils.sqlite_client import (
    as_int,
    as_text,
    fetch_table,
    list_tables,
    open_readonly,
)
from cloudme_scope.utils.timestamps import (
    normalize_timestamp,
    optional_timestamp,
    timestamp_from_epoch_seconds,
)
from cloudme_scope.webtrace_service import (
    WebDocument,
    dispatch_document,
    events_from_documents,
)

logger = logging.getLogger(__name__)

FILES_TABLE = "files"
FOLDERS_TABLE = "folders"
RECEIVER_DATA_TABLE = "cfurl_cache_receiver_data"
RESPONSE_TABLE = "cfurl_cache_response"

DOCUMENT_URL_PREFIX = "https://os.cloudme.com/v1/documents/"
MOBILE_PATH_SCHEME = "xios://"

FILE_VIEW_HEADERS = (
    "Owner",
    "Filename",
    "File Size",
    "Folder Name",
    "URL",
    "Published Time",
    "Last Updated Time",
    "File Type",
    "Origin",
)

FILE_VIEW_SQL = """SELECT
a.owner AS 'Owner',
a.name AS 'Filename',
a.size AS 'File Size',
b.name AS 'Folder Name',
a.href AS 'URL',
a.published AS 'Published Time',
a.updated AS 'Last Updated Time',
a.mime AS 'File Type',
b.path AS 'Origin'
FROM files a
INNER JOIN folders b ON a.folder_id=b.folder_id"""

NSURLCACHE_SQL = (
    "SELECT cfurl_cache_receiver_data.receiver_data, cfurl_cache_response.request_key, "
    "cfurl_cache_response.time_stamp FROM cfurl_cache_receiver_data, cfurl_cache_response "
    "WHERE cfurl_cache_receiver_data.entry_ID=cfurl_cache_response.entry_ID"
)


class MobileFileRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: Optional[int] = None
    name: str
    folder_id: int
    size: int
    href: Optional[str] = None
    published: Optional[Timestamp] = None
    updated: Optional[Timestamp] = None
    owner: Optional[str] = None
    mime: Optional[str] = None


class MobileFolderRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    folder_id: int
    name: str
    owner: Optional[str] = None
    parent: Optional[str] = None
    is_root: Optional[bool] = None
    path: Optional[str] = None


class DbSdbContents(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: EvidenceRef
    files: Tuple[MobileFileRow, ...] = ()
    folders: Tuple[MobileFolderRow, ...] = ()
    warnings: Tuple[str, ...] = ()


class FileViewRow(BaseModel):
    """One row of the file view history (files joined to their folder)"""

    model_config = ConfigDict(frozen=True)

    owner: Optional[str] = None
    filename: str
    file_size: int
    folder_name: str
    url: Optional[str] = None
    published: Optional[Timestamp] = None
    last_updated: Optional[Timestamp] = None
    file_type: Optional[str] = None
    origin: Optional[str] = None

    def as_row(self) -> Tuple[str, ...]:
        def raw(ts: Optional[Timestamp]) -> str:
            return ts.raw if ts else ""

        return (
            self.owner or "",
            self.filename,
            str(self.file_size),
            self.folder_name,
            self.url or "",
            raw(self.published),
            raw(self.last_updated),
            self.file_type or "",
            self.origin or "",
        )

    def as_dict(self) -> Dict[str, str]:
        return dict(zip(FILE_VIEW_HEADERS, self.as_row()))


class FileViewJoin(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: Tuple[FileViewRow, ...] = ()
    dropped: int = 0


class CachedResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    entry_id: int
    url: str
    fetched: Optional[Timestamp] = None
    body: bytes = b""
    document: Optional[WebDocument] = None


def _warn(warnings: List[str], message: str) -> None:
    logger.warning(message)
    warnings.append(message)


def _bool(value: Any) -> Optional[bool]:
    text = as_text(value)
    if text is None:
        return None
    return text.strip().lower() in ("1", "true", "yes")


def _iso_timestamp(value: Any, column: str, warnings: List[str]) -> Optional[Timestamp]:
    try:
        return optional_timestamp(as_text(value), TimestampHint.ISO8601_Z)
    except UnparsableTimestamp as e:
        _warn(warnings, f"{column}: {e}")
        return None


def parse_dbsdb(file: Path) -> DbSdbContents:
    """
    Enumerate the Android cache database 'files' and 'folders' tables

    Raises:
        NotSqlite: the file is not a SQLite database
        SchemaMismatch: a present table lacks a required column
    """
    file = Path(file)
    source = EvidenceRef(path=str(file), artefact_class=ArtefactClass.DATABASE)
    warnings: List[str] = []
    files: List[MobileFileRow] = []
    folders: List[MobileFolderRow] = []

    with open_readonly(file) as connection:
        tables = list_tables(connection)
        if FILES_TABLE in tables:
            rows = fetch_table(
                connection,
                FILES_TABLE,
                ("name", "folder_id", "size", "href", "published", "updated", "owner", "mime"),
                ("_id",),
            )
            for row in rows:
                href = as_text(row["href"])
                if href is not None and not href.startswith(DOCUMENT_URL_PREFIX):
                    _warn(warnings, f"files.href does not point at /v1/documents: {href}")
                files.append(
                    MobileFileRow(
                        id=as_int(row["_id"]),
                        name=as_text(row["name"]) or "",
                        folder_id=as_int(row["folder_id"]),
                        size=as_int(row["size"]) or 0,
                        href=href,
                        published=_iso_timestamp(row["published"], "files.published", warnings),
                        updated=_iso_timestamp(row["updated"], "files.updated", warnings),
                        owner=as_text(row["owner"]),
                        mime=as_text(row["mime"]),
                    )
                )
        else:
            _warn(warnings, f"{file.name}: table {FILES_TABLE} not present")

        if FOLDERS_TABLE in tables:
            rows = fetch_table(
                connection,
                FOLDERS_TABLE,
                ("folder_id", "name", "path"),
                ("owner", "parent", "is_root"),
            )
            for row in rows:
                path = as_text(row["path"])
                if path is not None and not path.startswith(MOBILE_PATH_SCHEME):
                    _warn(warnings, f"folders.path without {MOBILE_PATH_SCHEME} scheme: {path}")
                folders.append(
                    MobileFolderRow(
                        folder_id=as_int(row["folder_id"]),
                        name=as_text(row["name"]) or "",
                        owner=as_text(row["owner"]),
                        parent=as_text(row["parent"]),
                        is_root=_bool(row["is_root"]),
                        path=path,
                    )
                )
        else:
            _warn(warnings, f"{file.name}: table {FOLDERS_TABLE} not present")

    logger.info(f"Parsed {file}: {len(files)} files, {len(folders)} folders")
    return DbSdbContents(
        source=source, files=tuple(files), folders=tuple(folders), warnings=tuple(warnings)
    )


def join_file_view_history(
    parsed: DbSdbContents, warnings: Optional[List[str]] = None
) -> FileViewJoin:
    """files x folders on folder_id, inner join, files-table order."""
    folders_by_id: Dict[int, List[MobileFolderRow]] = {}
    for folder in parsed.folders:
        folders_by_id.setdefault(folder.folder_id, []).append(folder)

    rows: List[FileViewRow] = []
    dropped = 0
    for item in parsed.files:
        matches = folders_by_id.get(item.folder_id, [])
        if not matches:
            dropped += 1
            continue
        for folder in matches:
            rows.append(
                FileViewRow(
                    owner=item.owner,
                    filename=item.name,
                    file_size=item.size,
                    folder_name=folder.name,
                    url=item.href,
                    published=item.published,
                    last_updated=item.updated,
                    file_type=item.mime,
                    origin=folder.path,
                )
            )
    if dropped:
        message = f"file view join dropped {dropped} files with no matching folder"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    return FileViewJoin(rows=tuple(rows), dropped=dropped)


def events_from_dbsdb(
    rows: Sequence[FileViewRow], source: Optional[EvidenceRef] = None
) -> List[ForensicEvent]:
    source = source or EvidenceRef(path="db.sdb", artefact_class=ArtefactClass.DATABASE)
    events = []
    for row in rows:
        attributes = {"file_size": str(row.file_size), "folder_name": row.folder_name}
        if row.url:
            attributes["url"] = row.url
        if row.file_type:
            attributes["mime"] = row.file_type
        events.append(
            ForensicEvent(
                time=row.last_updated,
                kind=EventKind.FILE_VIEWED,
                actor=row.owner,
                object=f"{row.origin or ''}{row.filename}",
                attributes=attributes,
                source=source,
            )
        )
    return events


def _fetched(value: Any, warnings: List[str]) -> Optional[Timestamp]:
    """time_stamp holds datetime text on iOS; numeric epochs are accepted too."""
    if value is None or value == "":
        return None
    if isinstance(value, (int, float)):
        return timestamp_from_epoch_seconds(value, str(value))
    text = as_text(value) or ""
    for hint in (TimestampHint.SQLITE_DATETIME, TimestampHint.ISO8601_Z):
        try:
            return normalize_timestamp(text, hint)
        except UnparsableTimestamp:
            continue
    try:
        return timestamp_from_epoch_seconds(float(text), text)
    except (ValueError, UnparsableTimestamp):
        _warn(warnings, f"cfurl_cache_response.time_stamp: cannot parse {text!r}")
        return None


def parse_nsurlcache(
    file: Path, warnings: Optional[List[str]] = None
) -> List[CachedResponse]:
    """
    Pair cached response bodies with their request URL and fetch time

    Bodies that are CloudMe XML documents are parsed into ``document``.
    """
    file = Path(file)
    warnings = warnings if warnings is not None else []
    responses: List[CachedResponse] = []

    with open_readonly(file) as connection:
        tables = list_tables(connection)
        for table in (RECEIVER_DATA_TABLE, RESPONSE_TABLE):
            if table not in tables:
                raise SchemaMismatch(table, "entry_ID")
        bodies = fetch_table(connection, RECEIVER_DATA_TABLE, ("entry_ID", "receiver_data"))
        requests = fetch_table(
            connection, RESPONSE_TABLE, ("entry_ID", "request_key", "time_stamp")
        )

    by_entry: Dict[int, List[Dict[str, Any]]] = {}
    for request in requests:
        by_entry.setdefault(as_int(request["entry_ID"]), []).append(request)

    for body_row in bodies:
        entry_id = as_int(body_row["entry_ID"])
        body = body_row["receiver_data"]
        if isinstance(body, str):
            body = body.encode("utf-8")
        body = bytes(body or b"")
        for request in by_entry.get(entry_id, []):
            url = as_text(request["request_key"]) or ""
            document: Optional[WebDocument] = None
            if body.lstrip().startswith(b"<"):
                try:
                    document = dispatch_document(body, url)
                except (MalformedXml, WrongDocType) as e:
                    logger.debug(f"nsurlcache entry {entry_id} is not a CloudMe document: {e}")
            responses.append(
                CachedResponse(
                    entry_id=entry_id,
                    url=url,
                    fetched=_fetched(request["time_stamp"], warnings),
                    body=body,
                    document=document,
                )
            )

    logger.info(f"Parsed {file}: {len(responses)} cached responses")
    return responses


def events_from_nsurlcache(
    responses: Sequence[CachedResponse], source: Optional[EvidenceRef] = None
) -> List[ForensicEvent]:
    source = source or EvidenceRef(path="Cache.db", artefact_class=ArtefactClass.DATABASE)
    documents = [r.document for r in responses if r.document is not None]
    return events_from_documents(documents, source)
