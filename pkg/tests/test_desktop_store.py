import sqlite3
from collections import Counter

import pytest

from cloudme_scope.desktop_store_service import (
    SYNC_HISTORY_HEADERS,
    SYNC_HISTORY_SQL,
    events_from_cachedb,
    join_sync_history,
    parse_cachedb,
)
from cloudme_scope.exceptions import NotSqlite, SchemaMismatch
from cloudme_scope.models import EventKind
from evidence_builders import (
    DEVICE_NAME,
    OWNER,
    SYNC_DOCUMENTS,
    SYNC_FOLDER_ID,
    SYNC_FOLDER_PATH,
    USER_ID,
    build_cachedb,
)


def _oracle_rows(path):
    """The history query as run directly against the database."""
    connection = sqlite3.connect(path)
    try:
        rows = connection.execute(SYNC_HISTORY_SQL).fetchall()
    finally:
        connection.close()
    return Counter(tuple("" if v is None else str(v) for v in row) for row in rows)


def test_parse_cachedb_reads_the_four_tables(cachedb):
    parsed = parse_cachedb(cachedb)

    assert parsed.warnings == ()
    assert len(parsed.accounts) == 1
    account = parsed.accounts[0]
    assert account.user_id == USER_ID
    assert account.username == OWNER
    assert account.device_name == DEVICE_NAME
    assert len(parsed.folders) == 1
    assert parsed.folders[0].local_path == SYNC_FOLDER_PATH
    assert parsed.folders[0].inactivated is False
    assert len(parsed.tree) == 1
    assert [f.name for f in parsed.files] == [name for _, name, _, _ in SYNC_DOCUMENTS]
    assert all(len(f.checksum) == 32 for f in parsed.files)


def test_sync_history_matches_the_sql_join(cachedb):
    joined = join_sync_history(parse_cachedb(cachedb))

    assert joined.dropped == 0
    assert Counter(row.as_row() for row in joined.rows) == _oracle_rows(cachedb)


def test_sync_history_first_row(cachedb):
    row = join_sync_history(parse_cachedb(cachedb)).rows[0].as_dict()

    assert list(row) == list(SYNC_HISTORY_HEADERS)
    assert row == {
        "Owner Name": "adamthomson",
        "Sync Folder ID": "562958569596136",
        "Sync File ID": "4457417804",
        "Sync File Name": "Enron3111.jpg",
        "Sync Folder Path": "C:/Users/anonymous/Documents/MacSyncFolder",
        "File Size": "287937",
        "Sync File Last Modified Date": "2016-03-16 12:25:07",
        "Folder Creation Time": "2016-03-15 22:06:55",
        "Folder Last Sync Time": "2016-03-16 04:41:40",
        "Folder is Deleted": "",
        "Folder is inactivated": "false",
        "Folder is encrypted": "false",
    }


def test_unmatched_files_are_dropped(tmp_path):
    documents = list(SYNC_DOCUMENTS) + [(4457417899, "orphan.txt", 1, "2016-03-16 12:30:00")]
    path = build_cachedb(tmp_path / "cache.db", documents=documents)
    connection = sqlite3.connect(path)
    connection.execute(
        "UPDATE syncfolder_document_table SET folder_id = 1 WHERE name = 'orphan.txt'"
    )
    connection.commit()
    connection.close()

    warnings = []
    joined = join_sync_history(parse_cachedb(path), warnings)

    assert joined.dropped == 1
    assert warnings == ["sync history join dropped 1 unmatched file rows"]
    assert len(joined.rows) == len(SYNC_DOCUMENTS)
    assert Counter(row.as_row() for row in joined.rows) == _oracle_rows(path)


def test_events_from_cachedb(cachedb):
    parsed = parse_cachedb(cachedb)
    joined = join_sync_history(parsed)
    events = events_from_cachedb(joined.rows, parsed.accounts, parsed.source)

    kinds = Counter(e.kind for e in events)
    assert kinds == {
        EventKind.FILE_MODIFIED: 5,
        EventKind.SYNC_COMPLETED: 1,
        EventKind.FOLDER_CREATED: 1,
        EventKind.IDENTITY_FOUND: 1,
    }
    first = events[0]
    assert first.kind == EventKind.FILE_MODIFIED
    assert first.actor == OWNER
    assert first.object == f"{SYNC_FOLDER_PATH}/Enron3111.jpg"
    assert first.time.isoformat() == "2016-03-16T12:25:07Z"
    assert first.attribute("sync_folder_id") == str(SYNC_FOLDER_ID)
    assert first.source.path == str(cachedb)

    identity = [e for e in events if e.kind == EventKind.IDENTITY_FOUND][0]
    assert identity.attribute("user_id") == str(USER_ID)
    assert identity.attribute("device_name") == DEVICE_NAME


def test_deleted_and_inactivated_folders(tmp_path):
    path = build_cachedb(
        tmp_path / "cache.db", deleted="2016-03-17 09:00:00", inactivated="true"
    )
    parsed = parse_cachedb(path)
    events = events_from_cachedb(join_sync_history(parsed).rows, parsed.accounts, parsed.source)

    deleted = [e for e in events if e.kind == EventKind.FOLDER_DELETED]
    inactivated = [e for e in events if e.kind == EventKind.FOLDER_INACTIVATED]
    assert len(deleted) == 1
    assert deleted[0].time.isoformat() == "2016-03-17T09:00:00Z"
    assert len(inactivated) == 1
    assert inactivated[0].time.isoformat() == "2016-03-16T04:41:40Z"


def test_missing_table_is_a_warning(tmp_path):
    path = build_cachedb(tmp_path / "cache.db", skip_tables=["syncfolder_folder_table"])

    parsed = parse_cachedb(path)
    joined = join_sync_history(parsed)

    assert len(parsed.warnings) == 1
    assert "syncfolder_folder_table" in parsed.warnings[0]
    assert joined.rows == ()
    assert joined.dropped == len(SYNC_DOCUMENTS)


def test_missing_required_column(tmp_path):
    path = tmp_path / "cache.db"
    connection = sqlite3.connect(path)
    connection.execute("CREATE TABLE user_table (user_id INTEGER PRIMARY KEY, devicename TEXT)")
    connection.commit()
    connection.close()

    with pytest.raises(SchemaMismatch):
        parse_cachedb(path)


def test_not_sqlite(tmp_path):
    path = tmp_path / "cache.db"
    path.write_bytes(b"this is not a database at all")

    with pytest.raises(NotSqlite):
        parse_cachedb(path)


def test_invalid_utf8_text_is_replaced(cachedb):
    connection = sqlite3.connect(cachedb)
    connection.execute("UPDATE user_table SET username = CAST(X'61FF62' AS TEXT)")
    connection.commit()
    connection.close()

    parsed = parse_cachedb(cachedb)

    assert [a.username for a in parsed.accounts] == ["a\ufffdb"]
    assert len(parsed.files) == len(SYNC_DOCUMENTS)


def test_journal_sibling_is_reported_not_replayed(cachedb):
    cachedb.with_name("cache.db-wal").write_bytes(b"")

    parsed = parse_cachedb(cachedb)

    assert any("cache.db-wal" in w for w in parsed.warnings)
    assert len(parsed.files) == len(SYNC_DOCUMENTS)


def test_evidence_is_left_untouched(cachedb):
    before = cachedb.read_bytes()
    parse_cachedb(cachedb)
    assert cachedb.read_bytes() == before
