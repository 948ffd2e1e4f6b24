"""
Carver Service
==============

Recovers CloudMe facts from unstructured bytes (memory dumps, swap,
unallocated space): streaming keyword scans, and anchor-based decoding of
SQLite table records. A known string (usually a username) is located first;
record headers are then searched backwards from it and validated against a
column template.
"""

import logging
import mmap
import re
import struct
from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, model_validator
from typing import IO, Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import orjson
from tqdm import tqdm

from cloudme_scope.exceptions import MalformedHeader, Truncated, UnparsableTimestamp, Unreadable
from cloudme_scope.models import ArtefactClass, EventKind, EvidenceRef, ForensicEvent, TimestampHint
from cloudme_scope.utils.timestamps import optional_timestamp

logger = logging.getLogger(__name__)

Buffer = Union[bytes, bytearray, memoryview, mmap.mmap]

MAX_VARINT_LENGTH = 9
DEFAULT_CONTEXT = 128
DEFAULT_BACKWARD_BOUND = 64
DEFAULT_CHUNK_SIZE = 4 * 1024 * 1024


class KeywordEncoding(str, Enum):
    ASCII = "Ascii"
    UTF16LE = "Utf16le"


class TypeClass(str, Enum):
    INTEGER = "Integer"
    TEXT = "Text"
    BLOB = "Blob"
    REAL = "Real"
    ANY = "Any"


class KeywordHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    term: str
    offset: int
    context: bytes
    encoding: KeywordEncoding


class TemplateColumn(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    type: TypeClass


class RecordTemplate(BaseModel):
    """
    Expected column layout of one table's records

    ``rowid_column`` names the INTEGER PRIMARY KEY column, stored as NULL in
    the record with its value in the cell's rowid.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    columns: Tuple[TemplateColumn, ...]
    anchor_column: int
    rowid_column: Optional[int] = None

    @model_validator(mode="after")
    def _check(self) -> "RecordTemplate":
        if not self.columns:
            raise ValueError("template needs at least one column")
        if not 0 <= self.anchor_column < len(self.columns):
            raise ValueError("anchor_column outside the column list")
        if self.columns[self.anchor_column].type != TypeClass.TEXT:
            raise ValueError("anchor column must be of class Text")
        if self.rowid_column is not None and not 0 <= self.rowid_column < len(self.columns):
            raise ValueError("rowid_column outside the column list")
        return self


class CarvedRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    template: str = ""
    offset: int
    fields: Tuple[Tuple[int, Any], ...]
    rowid: Optional[int] = None
    header_length: int
    payload_end: int
    confidence: float = 1.0

    def values(self) -> List[Any]:
        return [value for _, value in self.fields]

    def column_values(self, template: RecordTemplate) -> Dict[str, Any]:
        """Column name -> value, with the rowid filled into its alias column."""
        values: Dict[str, Any] = {}
        for index, (column, (_, value)) in enumerate(zip(template.columns, self.fields)):
            if index == template.rowid_column and value is None:
                value = self.rowid
            values[column.name] = value
        return values


def _columns(*columns: Tuple[str, TypeClass]) -> Tuple[TemplateColumn, ...]:
    return tuple(TemplateColumn(name=name, type=kind) for name, kind in columns)


I, T, A = TypeClass.INTEGER, TypeClass.TEXT, TypeClass.ANY

# Column orders follow the cache.db field listing; the physical order inside
# records is not documented, so custom templates can override them.
BUILTIN_TEMPLATES: Dict[str, RecordTemplate] = {
    "user_table": RecordTemplate(
        name="user_table",
        columns=_columns(("user_id", I), ("username", T), ("devicename", T), ("created", T)),
        anchor_column=1,
        rowid_column=0,
    ),
    "syncfolder_table": RecordTemplate(
        name="syncfolder_table",
        columns=_columns(
            ("owner", I),
            ("name", T),
            ("local_path", T),
            ("cloud_path", T),
            ("folder_id", I),
            ("created", T),
            ("last_run", T),
            ("inactivated", T),
            ("encrypted", T),
        ),
        anchor_column=1,
    ),
    "syncfolder_folder_table": RecordTemplate(
        name="syncfolder_folder_table",
        columns=_columns(
            ("name", T),
            ("root_folder_id", I),
            ("folder_id", I),
            ("child_folder_id", I),
            ("creation_date", T),
            ("deleted", A),
            ("owner", I),
        ),
        anchor_column=0,
    ),
    "syncfolder_document_table": RecordTemplate(
        name="syncfolder_document_table",
        columns=_columns(
            ("owner", I),
            ("name", T),
            ("root_folder_id", I),
            ("folder_id", I),
            ("document_id", I),
            ("size", I),
            ("modified_date", T),
            ("checksum", T),
            ("main_checksum", T),
        ),
        anchor_column=1,
    ),
}


def load_template(path: Path) -> RecordTemplate:
    """
    Read a custom template::

        {"name": "user_table",
         "columns": [{"name": "user_id", "type": "Integer"}, ...],
         "anchor_column": 1,
         "rowid_column": 0}
    """
    return RecordTemplate.model_validate(orjson.loads(Path(path).read_bytes()))


def resolve_template(name_or_path: str) -> RecordTemplate:
    if name_or_path in BUILTIN_TEMPLATES:
        return BUILTIN_TEMPLATES[name_or_path]
    return load_template(Path(name_or_path))


# --------------------------------------------------------------------------
# Varints and records
# --------------------------------------------------------------------------


def decode_varint(buf: Buffer, offset: int = 0) -> Tuple[int, int]:
    """
    SQLite varint at ``offset``: (value, length in bytes)

    Big-endian groups of seven bits, high bit set while more follow; a ninth
    byte contributes all eight bits.
    """
    value = 0
    for i in range(MAX_VARINT_LENGTH):
        position = offset + i
        if position >= len(buf):
            raise Truncated(f"varint at {offset} runs past end of data")
        byte = buf[position]
        if i == MAX_VARINT_LENGTH - 1:
            return (value << 8) | byte, MAX_VARINT_LENGTH
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, i + 1
    raise AssertionError("unreachable")


def encode_varint(value: int) -> bytes:
    """Inverse of :func:`decode_varint`; negatives use the 64-bit two's complement."""
    if value < 0:
        value += 1 << 64
    if not 0 <= value < 1 << 64:
        raise ValueError(f"{value} does not fit in 64 bits")
    if value > 0x00FFFFFFFFFFFFFF:
        out = bytearray([value & 0xFF])
        value >>= 8
        for _ in range(8):
            out.insert(0, (value & 0x7F) | 0x80)
            value >>= 7
        return bytes(out)
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.insert(0, (value & 0x7F) | 0x80)
        value >>= 7
    return bytes(out)


_INTEGER_SIZES = {0: 0, 1: 1, 2: 2, 3: 3, 4: 4, 5: 6, 6: 8, 7: 8, 8: 0, 9: 0}


def serial_type_size(code: int) -> int:
    """Payload bytes taken by a serial type."""
    if code in _INTEGER_SIZES:
        return _INTEGER_SIZES[code]
    if code in (10, 11):
        raise MalformedHeader(f"reserved serial type {code}")
    if code % 2 == 0:
        return (code - 12) // 2
    return (code - 13) // 2


def type_class_matches(code: int, expected: TypeClass) -> bool:
    """NULL satisfies every class; REAL columns may hold integral values as integers."""
    if code == 0 or expected == TypeClass.ANY:
        return True
    if expected == TypeClass.INTEGER:
        return 1 <= code <= 6 or code in (8, 9)
    if expected == TypeClass.REAL:
        return 1 <= code <= 9
    if expected == TypeClass.TEXT:
        return code >= 13 and code % 2 == 1
    return code >= 12 and code % 2 == 0


def _field_value(code: int, data: bytes) -> Any:
    if code == 0:
        return None
    if 1 <= code <= 6:
        return int.from_bytes(data, "big", signed=True)
    if code == 7:
        return struct.unpack(">d", data)[0]
    if code == 8:
        return 0
    if code == 9:
        return 1
    if code % 2 == 0:
        return bytes(data)
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedHeader("text field is not valid UTF-8")


def decode_record(buf: Buffer, offset: int) -> CarvedRecord:
    """
    Decode the record whose header-length varint starts at ``offset``

    Raises:
        Truncated: header or payload runs past the end of ``buf``
        MalformedHeader: the serial types do not fill the header exactly, or a
            field is undecodable
    """
    header_length, consumed = decode_varint(buf, offset)
    if header_length < consumed:
        raise MalformedHeader(f"header length {header_length} shorter than its own varint")
    header_end = offset + header_length
    if header_end > len(buf):
        raise Truncated(f"header of {header_length} bytes at {offset} runs past end of data")

    codes: List[int] = []
    position = offset + consumed
    while position < header_end:
        code, length = decode_varint(buf, position)
        position += length
        codes.append(code)
    if position != header_end:
        raise MalformedHeader(f"serial types overrun the {header_length}-byte header at {offset}")

    fields: List[Tuple[int, Any]] = []
    for code in codes:
        size = serial_type_size(code)
        if position + size > len(buf):
            raise Truncated(f"field of {size} bytes at {position} runs past end of data")
        fields.append((code, _field_value(code, buf[position : position + size])))
        position += size

    return CarvedRecord(
        offset=offset,
        fields=tuple(fields),
        header_length=header_length,
        payload_end=position,
    )


def _field_offset(record: CarvedRecord, index: int) -> int:
    position = record.offset + record.header_length
    for code, _ in record.fields[:index]:
        position += serial_type_size(code)
    return position


def _cell_rowid(buf: Buffer, header_start: int, payload_size: int) -> Optional[int]:
    """
    Rowid of a table-leaf cell: [payload length][rowid][record]

    The rowid varint must end exactly at the header and be preceded by a
    payload-length varint equal to the record size.
    """
    for rowid_length in range(1, MAX_VARINT_LENGTH + 1):
        rowid_start = header_start - rowid_length
        if rowid_start < 1:
            break
        try:
            rowid, length = decode_varint(buf, rowid_start)
        except Truncated:
            continue
        if length != rowid_length:
            continue
        for size_length in range(1, MAX_VARINT_LENGTH + 1):
            size_start = rowid_start - size_length
            if size_start < 0:
                break
            try:
                declared, length = decode_varint(buf, size_start)
            except Truncated:
                continue
            if length == size_length and declared == payload_size:
                return rowid - (1 << 64) if rowid >= 1 << 63 else rowid
    return None


def _find_all(buf: Buffer, needle: bytes) -> Iterator[int]:
    position = buf.find(needle)
    while position != -1:
        yield position
        position = buf.find(needle, position + 1)


def carve_records_by_anchor(
    dump: Buffer,
    anchor: str,
    template: RecordTemplate,
    backward_bound: int = DEFAULT_BACKWARD_BOUND,
    min_confidence: float = 1.0,
) -> List[CarvedRecord]:
    """
    Recover records of ``template`` that hold ``anchor`` in the anchor column

    For every occurrence of the anchor, candidate header starts up to
    ``backward_bound`` bytes before it are decoded; a candidate is kept when it
    has the template's field count, places a Text field equal to the anchor
    exactly at the occurrence, and its type-class agreement (``confidence``)
    reaches ``min_confidence``. Results are ordered and deduplicated by offset.
    """
    if not anchor:
        raise ValueError("anchor must be non-empty")
    needle = anchor.encode("utf-8")
    width = len(template.columns)
    found: Dict[int, CarvedRecord] = {}

    for hit in _find_all(dump, needle):
        for start in range(hit - 1, max(-1, hit - backward_bound - 1), -1):
            if start in found:
                continue
            try:
                record = decode_record(dump, start)
            except (Truncated, MalformedHeader):
                continue
            if len(record.fields) != width:
                continue
            code, value = record.fields[template.anchor_column]
            if value != anchor or code < 13 or code % 2 == 0:
                continue
            if _field_offset(record, template.anchor_column) != hit:
                continue
            matched = sum(
                type_class_matches(c, column.type)
                for (c, _), column in zip(record.fields, template.columns)
            )
            confidence = matched / width
            if confidence < min_confidence:
                continue
            found[start] = record.model_copy(
                update={
                    "template": template.name,
                    "confidence": confidence,
                    "rowid": _cell_rowid(dump, start, record.payload_end - start),
                }
            )

    records = [found[offset] for offset in sorted(found)]
    logger.info(f"Carved {len(records)} {template.name} records for anchor {anchor!r}")
    return records


def carve_file(
    path: Path,
    anchor: str,
    template: RecordTemplate,
    backward_bound: int = DEFAULT_BACKWARD_BOUND,
    min_confidence: float = 1.0,
) -> List[CarvedRecord]:
    """Anchor carving over a memory-mapped dump file."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            if path.stat().st_size == 0:
                return []
            with mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ) as view:
                return carve_records_by_anchor(
                    view, anchor, template, backward_bound, min_confidence
                )
    except OSError as e:
        logger.error(f"Failed to carve {path}: {e}")
        raise Unreadable(str(path), f"({e.strerror or e})")


# --------------------------------------------------------------------------
# Keyword scanning
# --------------------------------------------------------------------------


def _patterns(
    terms: Sequence[str], case_insensitive: bool
) -> List[Tuple[str, KeywordEncoding, bytes, Optional["re.Pattern[bytes]"]]]:
    patterns = []
    for term in terms:
        for encoding, codec in (
            (KeywordEncoding.ASCII, "latin-1"),
            (KeywordEncoding.UTF16LE, "utf-16-le"),
        ):
            try:
                needle = term.encode(codec)
            except UnicodeEncodeError:
                needle = term.encode("utf-8") if encoding == KeywordEncoding.ASCII else b""
            if not needle:
                continue
            regex = (
                re.compile(b"(?=" + re.escape(needle) + b")", re.IGNORECASE)
                if case_insensitive
                else None
            )
            patterns.append((term, encoding, needle, regex))
    return patterns


def _read_chunks(stream: IO[bytes], chunk_size: int) -> Iterator[bytes]:
    while True:
        chunk = stream.read(chunk_size)
        if not chunk:
            return
        yield chunk


def scan_keywords(
    dump: Union[Path, str, bytes, IO[bytes]],
    terms: Sequence[str],
    case_insensitive: bool = False,
    context: int = DEFAULT_CONTEXT,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    progress: bool = False,
) -> List[KeywordHit]:
    """
    Every occurrence of each term as 8-bit text and as UTF-16LE

    The dump is read in ``chunk_size`` pieces; only the current chunk plus a
    tail of ``context`` and term-length bytes is held in memory. Hits are
    ordered by offset, then term order, then encoding.

    Raises:
        Unreadable: the dump cannot be opened or read
    """
    if not terms or not all(terms):
        raise ValueError("terms must be non-empty")
    patterns = _patterns(terms, case_insensitive)
    longest = max(len(needle) for _, _, needle, _ in patterns)
    keep = longest + context

    if isinstance(dump, (bytes, bytearray)):
        return _scan_stream(iter([bytes(dump)]), patterns, context, keep, len(dump), False)
    if isinstance(dump, (str, Path)):
        path = Path(dump)
        try:
            with open(path, "rb") as f:
                return _scan_stream(
                    _read_chunks(f, chunk_size),
                    patterns,
                    context,
                    keep,
                    path.stat().st_size,
                    progress,
                )
        except OSError as e:
            logger.error(f"Failed to scan {path}: {e}")
            raise Unreadable(str(path), f"({e.strerror or e})")
    return _scan_stream(_read_chunks(dump, chunk_size), patterns, context, keep, None, progress)


def _scan_stream(
    chunks: Iterator[bytes],
    patterns: List[Tuple[str, KeywordEncoding, bytes, Optional["re.Pattern[bytes]"]]],
    context: int,
    keep: int,
    total: Optional[int],
    progress: bool,
) -> List[KeywordHit]:
    hits: List[Tuple[int, int, KeywordHit]] = []
    buffer = b""
    base = 0  # absolute offset of buffer[0]
    done = 0  # hits starting before this offset were already reported
    chunk = next(chunks, None)

    with tqdm(total=total, unit="B", unit_scale=True, disable=not progress) as bar:
        while chunk is not None:
            following = next(chunks, None)
            buffer += chunk
            bar.update(len(chunk))
            end = base + len(buffer)
            limit = end if following is None else max(done, end - keep)

            for order, (term, encoding, needle, regex) in enumerate(patterns):
                starts = (
                    (m.start() for m in regex.finditer(buffer))
                    if regex is not None
                    else _find_all(buffer, needle)
                )
                for relative in starts:
                    offset = base + relative
                    if offset < done or offset >= limit:
                        continue
                    lo = max(0, relative - context)
                    hi = relative + len(needle) + context
                    hits.append(
                        (
                            offset,
                            order,
                            KeywordHit(
                                term=term,
                                offset=offset,
                                context=buffer[lo:hi],
                                encoding=encoding,
                            ),
                        )
                    )

            done = limit
            cut = max(0, limit - context - base)
            buffer = buffer[cut:]
            base += cut
            chunk = following

    hits.sort(key=lambda item: (item[0], item[1]))
    return [hit for _, _, hit in hits]


# --------------------------------------------------------------------------
# Timeline events
# --------------------------------------------------------------------------


def _time(value: Any) -> Any:
    if not isinstance(value, str):
        return None
    try:
        return optional_timestamp(value, TimestampHint.SQLITE_DATETIME)
    except UnparsableTimestamp:
        return None


def events_from_carved(
    records: Sequence[CarvedRecord], dump_path: Union[str, Path]
) -> List[ForensicEvent]:
    """IdentityFound, FileModified or FolderCreated per carved record of a built-in template."""
    events = []
    for record in records:
        template = BUILTIN_TEMPLATES.get(record.template)
        if template is None:
            continue
        values = record.column_values(template)
        source = EvidenceRef(
            path=str(dump_path), offset=record.offset, artefact_class=ArtefactClass.MEMORY_DUMP
        )
        attributes = {
            "template": record.template,
            "confidence": f"{record.confidence:.2f}",
        }
        if record.rowid is not None:
            attributes["rowid"] = str(record.rowid)

        if record.template == "user_table":
            if values.get("user_id") is not None:
                attributes["user_id"] = str(values["user_id"])
            if values.get("devicename"):
                attributes["device_name"] = str(values["devicename"])
            events.append(
                ForensicEvent(
                    time=_time(values.get("created")),
                    kind=EventKind.IDENTITY_FOUND,
                    actor=values.get("username"),
                    attributes=attributes,
                    source=source,
                )
            )
        elif record.template == "syncfolder_document_table":
            for key in ("document_id", "folder_id", "size"):
                if values.get(key) is not None:
                    attributes[key] = str(values[key])
            events.append(
                ForensicEvent(
                    time=_time(values.get("modified_date")),
                    kind=EventKind.FILE_MODIFIED,
                    object=values.get("name"),
                    attributes=attributes,
                    source=source,
                )
            )
        else:
            if values.get("folder_id") is not None:
                attributes["folder_id"] = str(values["folder_id"])
            created = values.get("created", values.get("creation_date"))
            events.append(
                ForensicEvent(
                    time=_time(created),
                    kind=EventKind.FOLDER_CREATED,
                    object=values.get("local_path") or values.get("name"),
                    attributes=attributes,
                    source=source,
                )
            )
    return events
