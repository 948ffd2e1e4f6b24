"""
Property list readers (binary ``bplist00`` and XML) producing the same tree

Trees are built from dict, list, str, int, float, bool, bytes, aware UTC
datetime, ``PlistUID`` and frozenset (binary sets only).
"""

import base64
import logging
import struct
from datetime import datetime, timedelta
from typing import Any, Dict, List, Set, Tuple

import pytz
from lxml import etree

from cloudme_scope.exceptions import NotPlist, TruncatedPlist, UnsupportedObjectType

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"bplist00"
TRAILER_SIZE = 32

_APPLE_EPOCH = datetime(2001, 1, 1, tzinfo=pytz.UTC)
_XML_PARSER = etree.XMLParser(resolve_entities=False, no_network=True, remove_comments=True)


class PlistUID(int):
    """Keyed-archiver object reference (marker 0x8n)."""

    def __repr__(self) -> str:
        return f"PlistUID({int(self)})"


def is_binary_plist(data: bytes) -> bool:
    return data[: len(BINARY_MAGIC)] == BINARY_MAGIC


def is_xml_plist(data: bytes) -> bool:
    head = data[:256].lstrip(b"\xef\xbb\xbf \t\r\n")
    return head.startswith((b"<?xml", b"<plist", b"<!DOCTYPE plist")) and b"<plist" in data[:1024]


class BinaryPlistReader:
    """
    Decoder for the ``bplist00`` layout

    The 32-byte trailer gives the offset-table entry size, the object
    reference size, the object count, the top object and the offset table
    position; every object is then decoded from the offset the table lists.
    """

    def __init__(self, data: bytes):
        self.data = data
        self.offset_size = 0
        self.ref_size = 0
        self.num_objects = 0
        self.top_object = 0
        self.offsets: List[int] = []
        self._active: Set[int] = set()

    def _take(self, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0 or offset + length > len(self.data):
            raise TruncatedPlist(
                f"need {length} bytes at offset {offset}, have {len(self.data)}"
            )
        return self.data[offset : offset + length]

    def _uint(self, offset: int, size: int) -> int:
        return int.from_bytes(self._take(offset, size), "big")

    def parse(self) -> Any:
        if not is_binary_plist(self.data):
            raise NotPlist("missing bplist00 magic")
        if len(self.data) < len(BINARY_MAGIC) + TRAILER_SIZE:
            raise TruncatedPlist("file shorter than header plus trailer")

        trailer = self.data[-TRAILER_SIZE:]
        (
            self.offset_size,
            self.ref_size,
            self.num_objects,
            self.top_object,
            table_offset,
        ) = struct.unpack(">6xBBQQQ", trailer)
        if self.offset_size == 0 or self.ref_size == 0:
            raise TruncatedPlist("trailer declares zero-width offsets")
        if self.top_object >= self.num_objects:
            raise TruncatedPlist("top object outside the object table")
        if table_offset + self.num_objects * self.offset_size > len(self.data) - TRAILER_SIZE:
            raise TruncatedPlist("offset table runs into the trailer")

        self.offsets = [
            self._uint(table_offset + i * self.offset_size, self.offset_size)
            for i in range(self.num_objects)
        ]
        return self._object(self.top_object)

    def _length(self, offset: int, info: int) -> Tuple[int, int]:
        """(length, start of payload) for the size nibble of a marker byte."""
        if info != 0x0F:
            return info, offset + 1
        marker = self._take(offset + 1, 1)[0]
        if marker & 0xF0 != 0x10:
            raise TruncatedPlist(f"bad length marker 0x{marker:02x} at offset {offset + 1}")
        size = 1 << (marker & 0x0F)
        return self._uint(offset + 2, size), offset + 2 + size

    def _refs(self, start: int, count: int) -> List[int]:
        return [self._uint(start + i * self.ref_size, self.ref_size) for i in range(count)]

    def _object(self, ref: int) -> Any:
        if ref >= self.num_objects:
            raise TruncatedPlist(f"object reference {ref} outside the object table")
        if ref in self._active:
            raise NotPlist(f"object {ref} contains itself")
        self._active.add(ref)
        try:
            return self._decode(self.offsets[ref])
        finally:
            self._active.discard(ref)

    def _decode(self, offset: int) -> Any:
        marker = self._take(offset, 1)[0]
        kind, info = marker & 0xF0, marker & 0x0F

        if marker == 0x00:
            return None
        if marker == 0x08:
            return False
        if marker == 0x09:
            return True
        if kind == 0x10:
            size = 1 << info
            # 8 and 16 byte integers are two's complement
            return int.from_bytes(self._take(offset + 1, size), "big", signed=size >= 8)
        if kind == 0x20:
            size = 1 << info
            if size == 4:
                return struct.unpack(">f", self._take(offset + 1, 4))[0]
            if size == 8:
                return struct.unpack(">d", self._take(offset + 1, 8))[0]
            raise UnsupportedObjectType(marker)
        if marker == 0x33:
            seconds = struct.unpack(">d", self._take(offset + 1, 8))[0]
            return _APPLE_EPOCH + timedelta(seconds=seconds)
        if kind == 0x40:
            length, start = self._length(offset, info)
            return self._take(start, length)
        if kind == 0x50:
            length, start = self._length(offset, info)
            return self._take(start, length).decode("ascii", errors="replace")
        if kind == 0x60:
            length, start = self._length(offset, info)
            return self._take(start, length * 2).decode("utf-16be", errors="replace")
        if kind == 0x70:
            length, start = self._length(offset, info)
            return self._take(start, length).decode("utf-8", errors="replace")
        if kind == 0x80:
            return PlistUID(self._uint(offset + 1, info + 1))
        if kind == 0xA0:
            length, start = self._length(offset, info)
            return [self._object(r) for r in self._refs(start, length)]
        if kind == 0xC0:
            length, start = self._length(offset, info)
            return frozenset(self._object(r) for r in self._refs(start, length))
        if kind == 0xD0:
            length, start = self._length(offset, info)
            keys = self._refs(start, length)
            values = self._refs(start + length * self.ref_size, length)
            result: Dict[Any, Any] = {}
            for key_ref, value_ref in zip(keys, values):
                key = self._object(key_ref)
                try:
                    result[key] = self._object(value_ref)
                except TypeError:
                    raise NotPlist(f"unhashable dictionary key at object {key_ref}")
            return result
        raise UnsupportedObjectType(marker)


def read_binary_plist(data: bytes) -> Any:
    return BinaryPlistReader(data).parse()


def _xml_value(element: etree._Element) -> Any:
    tag = element.tag
    text = element.text or ""
    if tag == "dict":
        result: Dict[str, Any] = {}
        children = [c for c in element if isinstance(c.tag, str)]
        if len(children) % 2:
            raise NotPlist("dict with an odd number of children")
        for key, value in zip(children[::2], children[1::2]):
            if key.tag != "key":
                raise NotPlist(f"expected <key>, found <{key.tag}>")
            result[key.text or ""] = _xml_value(value)
        return result
    if tag == "array":
        return [_xml_value(c) for c in element if isinstance(c.tag, str)]
    if tag == "string":
        return text
    if tag == "integer":
        raw = text.strip()
        if raw.lower().startswith("0x"):
            return int(raw, 16)
        return int(raw)
    if tag == "real":
        return float(text.strip())
    if tag == "true":
        return True
    if tag == "false":
        return False
    if tag == "date":
        try:
            naive = datetime.strptime(text.strip(), "%Y-%m-%dT%H:%M:%SZ")
        except ValueError:
            raise NotPlist(f"bad plist date {text!r}")
        return pytz.UTC.localize(naive)
    if tag == "data":
        return base64.b64decode("".join(text.split()))
    raise NotPlist(f"unexpected plist element <{tag}>")


def read_xml_plist(data: bytes) -> Any:
    try:
        root = etree.fromstring(data.lstrip(b"\xef\xbb\xbf \t\r\n"), parser=_XML_PARSER)
    except etree.XMLSyntaxError as e:
        raise NotPlist(f"malformed XML plist: {e}")
    if root.tag != "plist":
        raise NotPlist(f"root element is <{root.tag}>, not <plist>")
    children = [c for c in root if isinstance(c.tag, str)]
    if len(children) != 1:
        raise NotPlist("plist must hold exactly one top-level value")
    try:
        return _xml_value(children[0])
    except ValueError as e:
        if isinstance(e, NotPlist):
            raise
        raise NotPlist(f"bad plist value: {e}")


def read_plist_bytes(data: bytes) -> Any:
    """
    Decode a binary or XML property list

    Raises:
        NotPlist: neither layout, or not well-formed
        TruncatedPlist: a binary table or object runs past the end
        UnsupportedObjectType: unknown binary marker byte
    """
    if not data:
        raise NotPlist("empty file")
    if is_binary_plist(data):
        return read_binary_plist(data)
    if is_xml_plist(data):
        return read_xml_plist(data)
    raise NotPlist("neither bplist00 magic nor an XML plist declaration")
