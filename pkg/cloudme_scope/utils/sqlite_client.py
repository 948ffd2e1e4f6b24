import logging
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

from cloudme_scope.exceptions import NotSqlite, SchemaMismatch

logger = logging.getLogger(__name__)

SQLITE_MAGIC = b"SQLite format 3\x00"
JOURNAL_SUFFIXES = ("-wal", "-shm", "-journal")


def decode_text(value: bytes) -> str:
    # evidence TEXT columns may hold invalid UTF-8; keep the row, mark the bytes
    return value.decode("utf-8", errors="replace")


def is_sqlite_file(path: Path) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(len(SQLITE_MAGIC)) == SQLITE_MAGIC
    except OSError:
        return False


def sibling_journals(path: Path) -> List[Path]:
    return [
        path.with_name(path.name + suffix)
        for suffix in JOURNAL_SUFFIXES
        if path.with_name(path.name + suffix).exists()
    ]


@contextmanager
def open_readonly(path: Path) -> Iterator[sqlite3.Connection]:
    """Open evidence without locks, journal replay or any write.

    ``immutable=1`` makes SQLite ignore -wal/-journal siblings entirely, so
    the bytes on disk are exactly what gets parsed.
    """
    path = Path(path)
    if not is_sqlite_file(path):
        raise NotSqlite(str(path), "(missing SQLite header)")
    uri = path.resolve().as_uri() + "?mode=ro&immutable=1"
    try:
        connection = sqlite3.connect(uri, uri=True)
    except sqlite3.Error as e:
        raise NotSqlite(str(path), f"({e})")
    connection.text_factory = decode_text
    try:
        try:
            connection.execute("SELECT count(*) FROM sqlite_master").fetchone()
        except sqlite3.DatabaseError as e:
            raise NotSqlite(str(path), f"({e})")
        yield connection
    finally:
        connection.close()


def list_tables(connection: sqlite3.Connection) -> Dict[str, str]:
    """Lower-cased table name -> stored table name."""
    rows = connection.execute(
        "SELECT name FROM sqlite_master WHERE type='table'"
    ).fetchall()
    return {str(name).lower(): str(name) for (name,) in rows}


def table_columns(connection: sqlite3.Connection, table: str) -> Dict[str, str]:
    """Lower-cased column name -> stored column name."""
    quoted = table.replace('"', '""')
    rows = connection.execute(f'PRAGMA table_info("{quoted}")').fetchall()
    return {str(row[1]).lower(): str(row[1]) for row in rows}


def fetch_table(
    connection: sqlite3.Connection,
    table: str,
    required: Sequence[str],
    optional: Sequence[str] = (),
) -> List[Dict[str, Any]]:
    """
    Read the named columns of a table in storage order

    Column names are matched case-insensitively; extra columns are ignored.
    Absent optional columns read as None.

    Raises:
        SchemaMismatch: when a required column is absent
    """
    columns = table_columns(connection, table)
    for name in required:
        if name.lower() not in columns:
            raise SchemaMismatch(table, name)

    wanted = list(required) + [c for c in optional if c.lower() in columns]
    select = ", ".join(
        '"{}"'.format(columns[name.lower()].replace('"', '""')) for name in wanted
    )
    quoted = table.replace('"', '""')
    cursor = connection.execute(f'SELECT {select} FROM "{quoted}"')

    rows: List[Dict[str, Any]] = []
    for values in cursor:
        row: Dict[str, Any] = {name: None for name in optional}
        row.update(dict(zip(wanted, values)))
        rows.append(row)
    return rows


def as_int(value: Any) -> Optional[int]:
    if value is None or value == "":
        return None
    if isinstance(value, bytes):
        value = value.decode("ascii")
    return int(value)


def as_text(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bytes):
        return decode_text(value)
    return str(value)
