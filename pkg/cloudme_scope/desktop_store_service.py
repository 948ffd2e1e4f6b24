"""
Desktop Store Service
=====================

Parses the desktop client's ``cache.db`` and rebuilds the synchronisation
history from its user, sync-folder, folder-tree and document tables.
"""

import logging
from pathlib import Path
from pydantic import BaseModel, ConfigDict, field_validator
from typing import Any, Dict, List, Optional, Sequence, Tuple

from cloudme_scope.exceptions import UnparsableTimestamp
from cloudme_scope.models import (
    Account,
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
    sibling_journals,
)
from cloudme_scope.utils.timestamps import normalize_timestamp, optional_timestamp

logger = logging.getLogger(__name__)

USER_TABLE = "user_table"
FOLDER_TABLE = "syncfolder_table"
TREE_TABLE = "syncfolder_folder_table"
DOCUMENT_TABLE = "syncfolder_document_table"

# Output headers of the synchronisation-history query, in order
SYNC_HISTORY_HEADERS = (
    "Owner Name",
    "Sync Folder ID",
    "Sync File ID",
    "Sync File Name",
    "Sync Folder Path",
    "File Size",
    "Sync File Last Modified Date",
    "Folder Creation Time",
    "Folder Last Sync Time",
    "Folder is Deleted",
    "Folder is inactivated",
    "Folder is encrypted",
)

# The synchronisation-history join as investigators run it by hand
SYNC_HISTORY_SQL = """SELECT
d.username AS 'Owner Name',
a.folder_id AS 'Sync Folder ID',
a.document_id AS 'Sync File ID',
a.name AS 'Sync File Name',
c.local_path AS 'Sync Folder Path',
a.size AS 'File Size',
a.modified_date AS 'Sync File Last Modified Date',
c.created AS 'Folder Creation Time',
c.last_run AS 'Folder Last Sync Time',
b.deleted AS 'Folder is Deleted',
c.inactivated AS 'Folder is inactivated',
c.encrypted AS 'Folder is encrypted'
FROM syncfolder_document_table a
INNER JOIN syncfolder_folder_table b ON a.folder_id=b.child_folder_id
INNER JOIN syncfolder_table c ON c.folder_id=a.root_folder_id
INNER JOIN user_table d ON d.user_id=a.owner;"""


def _flag(value: Any, column: str, warnings: Optional[List[str]]) -> bool:
    text = as_text(value)
    if text is None:
        return False
    lowered = text.strip().lower()
    if lowered not in ("true", "false"):
        message = f"{column}: unexpected flag value {text!r}, read as false"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    return lowered == "true"


def _checksum(value: Any) -> Optional[str]:
    text = as_text(value)
    if not text:
        return None
    return text.strip().lower()


class SyncFolderRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    folder_id: int
    owner_id: int
    name: Optional[str] = None
    local_path: Optional[str] = None
    cloud_path: Optional[str] = None
    created: Optional[Timestamp] = None
    last_run: Optional[Timestamp] = None
    inactivated: bool = False
    encrypted: bool = False

    @field_validator("folder_id")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("folder_id must be positive")
        return value


class FolderTreeEdge(BaseModel):
    model_config = ConfigDict(frozen=True)

    root_folder_id: int
    folder_id: int
    child_folder_id: int
    name: Optional[str] = None
    creation_date: Optional[Timestamp] = None
    deleted: Optional[str] = None
    owner_id: Optional[int] = None


class SyncFileRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    document_id: int
    folder_id: int
    root_folder_id: int
    owner_id: int
    name: str
    size: int
    modified_date: Optional[Timestamp] = None
    checksum: Optional[str] = None
    main_checksum: Optional[str] = None

    @field_validator("size")
    @classmethod
    def _non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("size must be non-negative")
        return value

    @field_validator("checksum", "main_checksum")
    @classmethod
    def _md5(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        if len(value) != 32 or any(c not in "0123456789abcdef" for c in value):
            raise ValueError(f"not an MD5 hex digest: {value!r}")
        return value


class CacheDbContents(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: EvidenceRef
    accounts: Tuple[Account, ...] = ()
    folders: Tuple[SyncFolderRecord, ...] = ()
    tree: Tuple[FolderTreeEdge, ...] = ()
    files: Tuple[SyncFileRecord, ...] = ()
    warnings: Tuple[str, ...] = ()


class SyncHistoryRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    owner_name: str
    sync_folder_id: int
    sync_file_id: int
    sync_file_name: str
    sync_folder_path: Optional[str] = None
    file_size: int
    file_modified: Optional[Timestamp] = None
    folder_created: Optional[Timestamp] = None
    folder_last_sync: Optional[Timestamp] = None
    folder_deleted: Optional[str] = None
    folder_inactivated: bool = False
    folder_encrypted: bool = False

    def as_row(self) -> Tuple[str, ...]:
        """Column values as the history query prints them (NULL -> "")."""

        def raw(ts: Optional[Timestamp]) -> str:
            return ts.raw if ts else ""

        return (
            self.owner_name,
            str(self.sync_folder_id),
            str(self.sync_file_id),
            self.sync_file_name,
            self.sync_folder_path or "",
            str(self.file_size),
            raw(self.file_modified),
            raw(self.folder_created),
            raw(self.folder_last_sync),
            self.folder_deleted or "",
            "true" if self.folder_inactivated else "false",
            "true" if self.folder_encrypted else "false",
        )

    def as_dict(self) -> Dict[str, str]:
        return dict(zip(SYNC_HISTORY_HEADERS, self.as_row()))


class JoinResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: Tuple[SyncHistoryRow, ...] = ()
    dropped: int = 0


def _timestamp(
    value: Any, column: str, hint: TimestampHint, warnings: List[str]
) -> Optional[Timestamp]:
    try:
        return optional_timestamp(as_text(value), hint)
    except UnparsableTimestamp as e:
        message = f"{column}: {e}"
        logger.warning(message)
        warnings.append(message)
        return None


def _read_accounts(connection: Any, source: EvidenceRef, warnings: List[str]) -> List[Account]:
    rows = fetch_table(
        connection, USER_TABLE, ("user_id", "username"), ("devicename", "created")
    )
    accounts = []
    for row in rows:
        accounts.append(
            Account(
                user_id=as_int(row["user_id"]),
                username=as_text(row["username"]),
                device_name=as_text(row["devicename"]),
                created=_timestamp(
                    row["created"], "user_table.created", TimestampHint.SQLITE_DATETIME, warnings
                ),
                source=source,
            )
        )
    return accounts


def _read_folders(connection: Any, warnings: List[str]) -> List[SyncFolderRecord]:
    rows = fetch_table(
        connection,
        FOLDER_TABLE,
        (
            "folder_id",
            "owner",
            "name",
            "local_path",
            "cloud_path",
            "created",
            "last_run",
            "inactivated",
            "encrypted",
        ),
    )
    return [
        SyncFolderRecord(
            folder_id=as_int(row["folder_id"]),
            owner_id=as_int(row["owner"]),
            name=as_text(row["name"]),
            local_path=as_text(row["local_path"]),
            cloud_path=as_text(row["cloud_path"]),
            created=_timestamp(
                row["created"], "syncfolder_table.created", TimestampHint.SQLITE_DATETIME, warnings
            ),
            last_run=_timestamp(
                row["last_run"], "syncfolder_table.last_run", TimestampHint.SQLITE_DATETIME, warnings
            ),
            inactivated=_flag(row["inactivated"], "syncfolder_table.inactivated", warnings),
            encrypted=_flag(row["encrypted"], "syncfolder_table.encrypted", warnings),
        )
        for row in rows
    ]


def _read_tree(connection: Any, warnings: List[str]) -> List[FolderTreeEdge]:
    rows = fetch_table(
        connection,
        TREE_TABLE,
        ("root_folder_id", "folder_id", "child_folder_id", "deleted"),
        ("name", "creation_date", "owner"),
    )
    return [
        FolderTreeEdge(
            root_folder_id=as_int(row["root_folder_id"]),
            folder_id=as_int(row["folder_id"]),
            child_folder_id=as_int(row["child_folder_id"]),
            name=as_text(row["name"]),
            creation_date=_timestamp(
                row["creation_date"],
                "syncfolder_folder_table.creation_date",
                TimestampHint.SQLITE_DATETIME,
                warnings,
            ),
            deleted=as_text(row["deleted"]),
            owner_id=as_int(row["owner"]),
        )
        for row in rows
    ]


def _read_files(connection: Any, warnings: List[str]) -> List[SyncFileRecord]:
    rows = fetch_table(
        connection,
        DOCUMENT_TABLE,
        ("document_id", "folder_id", "root_folder_id", "owner", "name", "size", "modified_date"),
        ("checksum", "main_checksum"),
    )
    return [
        SyncFileRecord(
            document_id=as_int(row["document_id"]),
            folder_id=as_int(row["folder_id"]),
            root_folder_id=as_int(row["root_folder_id"]),
            owner_id=as_int(row["owner"]),
            name=as_text(row["name"]) or "",
            size=as_int(row["size"]) or 0,
            modified_date=_timestamp(
                row["modified_date"],
                "syncfolder_document_table.modified_date",
                TimestampHint.SQLITE_DATETIME,
                warnings,
            ),
            checksum=_checksum(row["checksum"]),
            main_checksum=_checksum(row["main_checksum"]),
        )
        for row in rows
    ]


def parse_cachedb(file: Path) -> CacheDbContents:
    """
    Enumerate the four tables of forensic interest in a desktop cache.db

    Args:
        file: path to the evidence database, opened read-only

    Returns:
        Parsed rows plus warnings (missing tables, journal siblings)

    Raises:
        NotSqlite: the file is not a SQLite database
        SchemaMismatch: a present table lacks a required column
    """
    file = Path(file)
    source = EvidenceRef(path=str(file), artefact_class=ArtefactClass.DATABASE)
    warnings: List[str] = []

    for journal in sibling_journals(file):
        message = f"{journal.name} present next to {file.name}; not replayed"
        logger.warning(message)
        warnings.append(message)

    readers = (
        (USER_TABLE, lambda c: _read_accounts(c, source, warnings)),
        (FOLDER_TABLE, lambda c: _read_folders(c, warnings)),
        (TREE_TABLE, lambda c: _read_tree(c, warnings)),
        (DOCUMENT_TABLE, lambda c: _read_files(c, warnings)),
    )
    parsed: Dict[str, List[Any]] = {}
    with open_readonly(file) as connection:
        tables = list_tables(connection)
        for table, reader in readers:
            if table not in tables:
                message = f"{file.name}: table {table} not present"
                logger.warning(message)
                warnings.append(message)
                parsed[table] = []
                continue
            parsed[table] = reader(connection)

    logger.info(
        f"Parsed {file}: {len(parsed[USER_TABLE])} accounts, "
        f"{len(parsed[FOLDER_TABLE])} folders, {len(parsed[DOCUMENT_TABLE])} files"
    )
    return CacheDbContents(
        source=source,
        accounts=tuple(parsed[USER_TABLE]),
        folders=tuple(parsed[FOLDER_TABLE]),
        tree=tuple(parsed[TREE_TABLE]),
        files=tuple(parsed[DOCUMENT_TABLE]),
        warnings=tuple(warnings),
    )


def join_sync_history(
    parsed: CacheDbContents, warnings: Optional[List[str]] = None
) -> JoinResult:
    """
    Rebuild the synchronisation history with inner-join semantics

    files x tree on folder_id = child_folder_id, x folders on
    root_folder_id = folder_id, x accounts on owner = user_id. Rows follow
    the document table order; files that join nothing are counted as dropped.
    """
    edges_by_child: Dict[int, List[FolderTreeEdge]] = {}
    for edge in parsed.tree:
        edges_by_child.setdefault(edge.child_folder_id, []).append(edge)
    folders_by_id: Dict[int, List[SyncFolderRecord]] = {}
    for folder in parsed.folders:
        folders_by_id.setdefault(folder.folder_id, []).append(folder)
    accounts_by_id: Dict[int, List[Account]] = {}
    for account in parsed.accounts:
        accounts_by_id.setdefault(account.user_id, []).append(account)

    rows: List[SyncHistoryRow] = []
    dropped = 0
    for document in parsed.files:
        produced = 0
        for edge in edges_by_child.get(document.folder_id, []):
            for folder in folders_by_id.get(document.root_folder_id, []):
                for account in accounts_by_id.get(document.owner_id, []):
                    rows.append(
                        SyncHistoryRow(
                            owner_name=account.username,
                            sync_folder_id=document.folder_id,
                            sync_file_id=document.document_id,
                            sync_file_name=document.name,
                            sync_folder_path=folder.local_path,
                            file_size=document.size,
                            file_modified=document.modified_date,
                            folder_created=folder.created,
                            folder_last_sync=folder.last_run,
                            folder_deleted=edge.deleted,
                            folder_inactivated=folder.inactivated,
                            folder_encrypted=folder.encrypted,
                        )
                    )
                    produced += 1
        if produced == 0:
            dropped += 1

    if dropped:
        message = f"sync history join dropped {dropped} unmatched file rows"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    return JoinResult(rows=tuple(rows), dropped=dropped)


def events_from_cachedb(
    rows: Sequence[SyncHistoryRow],
    accounts: Sequence[Account],
    source: Optional[EvidenceRef] = None,
) -> List[ForensicEvent]:
    """Timeline events for joined history rows and user_table accounts."""
    events: List[ForensicEvent] = []
    seen_folders: set = set()

    for row in rows:
        row_source = source or EvidenceRef(
            path="cache.db", artefact_class=ArtefactClass.DATABASE
        )
        folder_path = row.sync_folder_path or ""
        events.append(
            ForensicEvent(
                time=row.file_modified,
                kind=EventKind.FILE_MODIFIED,
                actor=row.owner_name,
                object=f"{folder_path}/{row.sync_file_name}",
                attributes={
                    "sync_file_id": str(row.sync_file_id),
                    "sync_folder_id": str(row.sync_folder_id),
                    "file_size": str(row.file_size),
                },
                source=row_source,
            )
        )

        if row.sync_folder_id in seen_folders:
            continue
        seen_folders.add(row.sync_folder_id)
        folder_attributes = {"sync_folder_id": str(row.sync_folder_id)}

        events.append(
            ForensicEvent(
                time=row.folder_last_sync,
                kind=EventKind.SYNC_COMPLETED,
                actor=row.owner_name,
                object=folder_path,
                attributes=folder_attributes,
                source=row_source,
            )
        )
        if row.folder_created is not None:
            events.append(
                ForensicEvent(
                    time=row.folder_created,
                    kind=EventKind.FOLDER_CREATED,
                    actor=row.owner_name,
                    object=folder_path,
                    attributes=folder_attributes,
                    source=row_source,
                )
            )
        if row.folder_inactivated:
            events.append(
                ForensicEvent(
                    time=row.folder_last_sync,
                    kind=EventKind.FOLDER_INACTIVATED,
                    actor=row.owner_name,
                    object=folder_path,
                    attributes=folder_attributes,
                    source=row_source,
                )
            )
        if row.folder_deleted is not None:
            try:
                deleted_at: Optional[Timestamp] = normalize_timestamp(
                    row.folder_deleted, TimestampHint.SQLITE_DATETIME
                )
            except UnparsableTimestamp:
                deleted_at = None
            events.append(
                ForensicEvent(
                    time=deleted_at,
                    kind=EventKind.FOLDER_DELETED,
                    actor=row.owner_name,
                    object=folder_path,
                    attributes={**folder_attributes, "deleted": row.folder_deleted},
                    source=row_source,
                )
            )

    for account in accounts:
        attributes = {"user_id": str(account.user_id)}
        if account.device_name:
            attributes["device_name"] = account.device_name
        events.append(
            ForensicEvent(
                time=account.created,
                kind=EventKind.IDENTITY_FOUND,
                actor=account.username,
                attributes=attributes,
                source=account.source,
            )
        )
    return events
