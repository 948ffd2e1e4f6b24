"""
Webtrace Service
================

Web-application traces: browser-history URLs mapped to CloudMe user actions,
the ``www.cloudme.com/v1`` cache tree and the XML documents it holds
(webshares, favorites, device sync profile, folder listing, lifestream).
"""

import csv
import io
import logging
import os
import re
import sqlite3
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlsplit

from dateutil import parser as date_parser
from lxml import etree
from pydantic import BaseModel, ConfigDict, model_validator
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from cloudme_scope.exceptions import (
    MalformedXml,
    RootNotFound,
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
    is_sqlite_file,
    list_tables,
    open_readonly,
)
from cloudme_scope.utils.timestamps import (
    normalize_timestamp,
    parse_any_timestamp,
    timestamp_from_datetime,
    timestamp_from_unix_micros,
    timestamp_from_webkit_micros,
)

logger = logging.getLogger(__name__)

CLOUDME_DOMAIN = "cloudme.com"
CACHE_ROOT = ("www.cloudme.com", "v1")

_XML_PARSER = etree.XMLParser(resolve_entities=False, no_network=True)
_SNIFF_BYTES = 512

Attributes = Tuple[Tuple[str, str], ...]


# --------------------------------------------------------------------------
# URL taxonomy
# --------------------------------------------------------------------------


class UrlKind(str, Enum):
    FOLDER_ACCESS_BY_NAME = "FolderAccessByName"
    FOLDER_ACCESS_BY_ID = "FolderAccessById"
    FOLDER_SYNC = "FolderSync"
    FILE_ACCESS_OR_DOWNLOAD = "FileAccessOrDownload"
    WEB_SHARE_ACCESS = "WebShareAccess"
    SHARED_FILE_DOWNLOAD = "SharedFileDownload"
    LOGOUT = "Logout"
    OTHER_CLOUDME = "OtherCloudMe"
    NOT_CLOUDME = "NotCloudMe"


_REQUIRED_FIELDS: Dict[UrlKind, Tuple[str, ...]] = {
    UrlKind.FOLDER_ACCESS_BY_NAME: ("folder_name",),
    UrlKind.FOLDER_ACCESS_BY_ID: ("folder_id",),
    UrlKind.FOLDER_SYNC: ("folder_id",),
    UrlKind.FILE_ACCESS_OR_DOWNLOAD: ("folder_id", "document_id", "filename"),
    UrlKind.SHARED_FILE_DOWNLOAD: ("folder_id", "document_id", "filename"),
    UrlKind.WEB_SHARE_ACCESS: ("folder_name",),
    UrlKind.LOGOUT: ("epoch_ms",),
}


class UrlClassification(BaseModel):
    model_config = ConfigDict(frozen=True)

    url: str
    kind: UrlKind
    folder_id: Optional[int] = None
    document_id: Optional[int] = None
    folder_name: Optional[str] = None
    filename: Optional[str] = None
    epoch_ms: Optional[int] = None

    @model_validator(mode="after")
    def _kind_fields(self) -> "UrlClassification":
        for field in _REQUIRED_FIELDS.get(self.kind, ()):
            if getattr(self, field) is None:
                raise ValueError(f"{self.kind.value} requires {field}")
        return self


_DOCUMENT_PATH = re.compile(r"^/v1/documents/(\d+)/(\d+)/1/(.+)$")
_WEBSHARE_FRAGMENT = re.compile(r"^webshares:/(.+)$")
_SYNC_ID_NAME_FRAGMENT = re.compile(r"^sync:f:(\d+),\s*(.+)$")
_SYNC_ID_FRAGMENT = re.compile(r"^sync:(?:f:|/)(\d+)$")
_FILES_ID_FRAGMENT = re.compile(r"^files:f:(\d+)$")
_FILES_NAME_FRAGMENT = re.compile(r"^files:/(?:Documents/)?(.+)$")


def _is_cloudme_host(host: str) -> bool:
    host = host.lower().rstrip(".")
    return host == CLOUDME_DOMAIN or host.endswith("." + CLOUDME_DOMAIN)


def classify_url(url: str) -> UrlClassification:
    """
    Map a browser-history URL to the web-application action it records

    Most specific rule first; path and fragment are percent-decoded before
    matching. Never raises: foreign hosts are NotCloudMe and cloudme.com URLs
    matching no action are OtherCloudMe.
    """
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname or ""
    except ValueError:
        return UrlClassification(url=url, kind=UrlKind.NOT_CLOUDME)
    if not _is_cloudme_host(host):
        return UrlClassification(url=url, kind=UrlKind.NOT_CLOUDME)

    query = parse_qs(parts.query, keep_blank_values=True)
    document = _DOCUMENT_PATH.match(unquote(parts.path))
    if document:
        kind = UrlKind.SHARED_FILE_DOWNLOAD if "dl" in query else UrlKind.FILE_ACCESS_OR_DOWNLOAD
        return UrlClassification(
            url=url,
            kind=kind,
            folder_id=int(document.group(1)),
            document_id=int(document.group(2)),
            filename=document.group(3),
        )

    fragment = unquote(parts.fragment)
    match = _WEBSHARE_FRAGMENT.match(fragment)
    if match:
        return UrlClassification(url=url, kind=UrlKind.WEB_SHARE_ACCESS, folder_name=match.group(1))
    match = _SYNC_ID_NAME_FRAGMENT.match(fragment)
    if match:
        return UrlClassification(
            url=url,
            kind=UrlKind.FOLDER_SYNC,
            folder_id=int(match.group(1)),
            folder_name=match.group(2),
        )
    match = _SYNC_ID_FRAGMENT.match(fragment)
    if match:
        return UrlClassification(url=url, kind=UrlKind.FOLDER_SYNC, folder_id=int(match.group(1)))
    match = _FILES_ID_FRAGMENT.match(fragment)
    if match:
        return UrlClassification(
            url=url, kind=UrlKind.FOLDER_ACCESS_BY_ID, folder_id=int(match.group(1))
        )
    match = _FILES_NAME_FRAGMENT.match(fragment)
    if match:
        return UrlClassification(
            url=url, kind=UrlKind.FOLDER_ACCESS_BY_NAME, folder_name=match.group(1)
        )

    if query.get("logout") == ["1"]:
        r_values = query.get("r", [])
        if r_values and r_values[0].isdigit():
            return UrlClassification(url=url, kind=UrlKind.LOGOUT, epoch_ms=int(r_values[0]))

    return UrlClassification(url=url, kind=UrlKind.OTHER_CLOUDME)


# --------------------------------------------------------------------------
# Web-cache documents
# --------------------------------------------------------------------------


class ShareAccess(str, Enum):
    READ = "read"
    UPDATE = "update"


class DocumentKind(str, Enum):
    WEBSHARES = "webshares"
    FAVORITES = "favorites"
    DEVICE_SYNC = "sync"
    FOLDER_LISTING = "folder"
    LIFESTREAM = "lifestream"


class OpenSearchMetadata(BaseModel):
    model_config = ConfigDict(frozen=True)

    total_results: Optional[int] = None
    start_index: Optional[int] = None
    items_per_page: Optional[int] = None


class WebShareRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    folder_id: Optional[int] = None
    folder_name: Optional[str] = None
    name: Optional[str] = None
    password: Optional[str] = None
    access: Optional[ShareAccess] = None
    visibility: Optional[str] = None
    description: Optional[str] = None
    user_id: Optional[int] = None
    created: Optional[Timestamp] = None
    updated: Optional[Timestamp] = None
    created_state: Optional[str] = None
    share_type: Optional[str] = None
    raw: Attributes = ()


class FavoriteRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    folder_id: Optional[int] = None
    document_id: Optional[int] = None
    name: Optional[str] = None
    password: Optional[str] = None
    webshare_id: Optional[int] = None
    sharing_user_name: Optional[str] = None
    sharing_user_id: Optional[int] = None
    user_id: Optional[int] = None
    access: Optional[str] = None
    description: Optional[str] = None
    created: Optional[Timestamp] = None
    raw: Attributes = ()


class SyncFolderEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: Optional[str] = None
    path: Optional[str] = None
    cloud_path: Optional[str] = None
    folder_id: Optional[int] = None
    last_sync: Optional[Timestamp] = None
    has_synchronized: Optional[bool] = None
    favorite_folder: Optional[bool] = None
    inactivated: Optional[bool] = None
    conflict: Optional[str] = None
    raw: Attributes = ()


class DeviceSyncProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    device_name: Optional[str] = None
    client_id: Optional[str] = None
    version: Optional[str] = None
    folders: Tuple[SyncFolderEntry, ...] = ()


class FolderTag(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: Optional[str] = None
    value: Optional[str] = None
    group: Optional[str] = None
    propagated: Optional[bool] = None


class FolderListingEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    folder_id: int
    name: Optional[str] = None
    parent_id: Optional[int] = None
    tags: Tuple[FolderTag, ...] = ()


class LifestreamEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    sender_id: Optional[str] = None
    sender_group_id: Optional[str] = None
    sender_name: Optional[str] = None
    receiver_id: Optional[str] = None
    receiver_group_id: Optional[str] = None
    receiver_name: Optional[str] = None
    parent_folder: Optional[str] = None
    seen: Optional[bool] = None
    time: Optional[Timestamp] = None
    raw: Attributes = ()


class WebDocument(BaseModel):
    """A classified CloudMe XML document with its parsed payload"""

    model_config = ConfigDict(frozen=True)

    kind: DocumentKind
    origin: str = ""
    source: Optional[EvidenceRef] = None
    metadata: Optional[OpenSearchMetadata] = None
    webshares: Tuple[WebShareRecord, ...] = ()
    favorites: Tuple[FavoriteRecord, ...] = ()
    device: Optional[DeviceSyncProfile] = None
    folders: Tuple[FolderListingEntry, ...] = ()
    lifestream: Tuple[LifestreamEvent, ...] = ()
    warnings: Tuple[str, ...] = ()


def _localname(element: etree._Element) -> str:
    if not isinstance(element.tag, str):
        return ""
    return etree.QName(element).localname


def _parse_xml(xml: Union[bytes, str]) -> etree._Element:
    if isinstance(xml, str):
        xml = xml.encode("utf-8")
    try:
        return etree.fromstring(xml.lstrip(), parser=_XML_PARSER)
    except etree.XMLSyntaxError as e:
        raise MalformedXml(str(e))


def _expect_root(xml: Union[bytes, str], expected: str) -> etree._Element:
    root = _parse_xml(xml)
    found = _localname(root)
    if found != expected:
        raise WrongDocType(expected, found)
    return root


def _children(element: etree._Element, name: str) -> List[etree._Element]:
    return [child for child in element if _localname(child) == name]


def _raw(element: etree._Element) -> Attributes:
    return tuple((etree.QName(k).localname, v) for k, v in element.attrib.items())


def _int(value: Optional[str]) -> Optional[int]:
    if value is None or not value.strip().lstrip("-").isdigit():
        return None
    return int(value)


def _bool(value: Optional[str]) -> Optional[bool]:
    if value is None:
        return None
    return value.strip().lower() == "true"


def _time(value: Optional[str], warnings: List[str]) -> Optional[Timestamp]:
    if not value:
        return None
    try:
        return parse_any_timestamp(value)
    except UnparsableTimestamp as e:
        logger.warning(str(e))
        warnings.append(str(e))
        return None


def read_opensearch_metadata(xml: Union[bytes, str]) -> OpenSearchMetadata:
    """OpenSearch counters (totalResults, startIndex, itemsPerPage) of a listing."""
    return _opensearch(_parse_xml(xml))


def _opensearch(root: etree._Element) -> OpenSearchMetadata:
    values: Dict[str, Optional[int]] = {}
    for child in root:
        name = _localname(child)
        if name in ("totalResults", "startIndex", "itemsPerPage"):
            values[name] = _int(child.text)
    return OpenSearchMetadata(
        total_results=values.get("totalResults"),
        start_index=values.get("startIndex"),
        items_per_page=values.get("itemsPerPage"),
    )


def _webshares(root: etree._Element, warnings: List[str]) -> List[WebShareRecord]:
    records = []
    for element in _children(root, "webshare"):
        attrs = element.attrib
        share_id = _int(attrs.get("id"))
        if share_id is None:
            warnings.append(f"webshare without numeric id skipped: {dict(attrs)}")
            continue
        folder = next(iter(_children(element, "folder")), None)
        access = attrs.get("access")
        records.append(
            WebShareRecord(
                id=share_id,
                folder_id=_int(folder.get("id")) if folder is not None else None,
                folder_name=folder.get("name") if folder is not None else None,
                name=attrs.get("name"),
                password=attrs.get("password"),
                access=ShareAccess(access) if access in ("read", "update") else None,
                visibility=attrs.get("visibility"),
                description=attrs.get("description"),
                user_id=_int(attrs.get("userId")),
                created=_time(attrs.get("created"), warnings),
                updated=_time(attrs.get("updated"), warnings),
                created_state=attrs.get("createdState"),
                share_type=attrs.get("type"),
                raw=_raw(element),
            )
        )
    return records


def parse_webshares_doc(xml: Union[bytes, str]) -> List[WebShareRecord]:
    """
    Parse a ``webshares`` OpenSearch listing, one record per ``webshare``

    Raises:
        MalformedXml: the bytes are not well-formed XML
        WrongDocType: the root element is not ``webshares``
    """
    return _webshares(_expect_root(xml, "webshares"), [])


def _favorites(root: etree._Element, warnings: List[str]) -> List[FavoriteRecord]:
    records = []
    for element in _children(root, "favorite"):
        attrs = element.attrib
        favorite_id = _int(attrs.get("id"))
        if favorite_id is None:
            warnings.append(f"favorite without numeric id skipped: {dict(attrs)}")
            continue
        records.append(
            FavoriteRecord(
                id=favorite_id,
                folder_id=_int(attrs.get("folder_id")),
                document_id=_int(attrs.get("document_id")),
                name=attrs.get("name"),
                password=attrs.get("password"),
                webshare_id=_int(attrs.get("webShareId")),
                sharing_user_name=attrs.get("sharingUserName"),
                sharing_user_id=_int(attrs.get("sharingUserId")),
                user_id=_int(attrs.get("userId")),
                access=attrs.get("access"),
                description=attrs.get("description"),
                created=_time(attrs.get("created"), warnings),
                raw=_raw(element),
            )
        )
    return records


def parse_favorites_doc(xml: Union[bytes, str]) -> List[FavoriteRecord]:
    """Parse a ``favorites`` OpenSearch listing, one record per ``favorite``."""
    return _favorites(_expect_root(xml, "favorites"), [])


_SYNCFOLDER_MAPPED = {
    "name",
    "path",
    "cloudPath",
    "folderId",
    "lastSync",
    "hasSynchronized",
    "hasSynchronised",
    "favoriteFolder",
    "inactivated",
    "conflict",
}


def _device(root: etree._Element, warnings: List[str]) -> DeviceSyncProfile:
    folders = []
    for element in _children(root, "syncfolder"):
        attrs = element.attrib
        synchronized = attrs.get("hasSynchronized", attrs.get("hasSynchronised"))
        folders.append(
            SyncFolderEntry(
                name=attrs.get("name"),
                path=attrs.get("path"),
                cloud_path=attrs.get("cloudPath"),
                folder_id=_int(attrs.get("folderId")),
                last_sync=_time(attrs.get("lastSync"), warnings),
                has_synchronized=_bool(synchronized),
                favorite_folder=_bool(attrs.get("favoriteFolder")),
                inactivated=_bool(attrs.get("inactivated")),
                conflict=attrs.get("conflict"),
                raw=tuple((k, v) for k, v in _raw(element) if k not in _SYNCFOLDER_MAPPED),
            )
        )
    return DeviceSyncProfile(
        device_name=root.get("dName"),
        client_id=root.get("clientId"),
        version=root.get("version"),
        folders=tuple(folders),
    )


def parse_device_sync_doc(xml: Union[bytes, str]) -> DeviceSyncProfile:
    """Parse the per-device ``sync`` metadata document."""
    return _device(_expect_root(xml, "sync"), [])


def _folder_listing(root: etree._Element, warnings: List[str]) -> List[FolderListingEntry]:
    entries: List[FolderListingEntry] = []

    def walk(element: etree._Element, parent_id: Optional[int]) -> None:
        folder_id = _int(element.get("id"))
        tags = []
        nested = []
        for child in element:
            name = _localname(child)
            if name == "tag":
                tags.append(
                    FolderTag(
                        type=child.get("type"),
                        value=child.get("value"),
                        group=child.get("group"),
                        propagated=_bool(child.get("propagated")),
                    )
                )
            elif name == "folder":
                nested.append(child)
            elif name:
                message = f"folder listing: ignored element <{name}>"
                logger.warning(message)
                warnings.append(message)
        if folder_id is None:
            warnings.append("folder listing: folder without numeric id skipped")
        else:
            entries.append(
                FolderListingEntry(
                    folder_id=folder_id,
                    name=element.get("name"),
                    parent_id=parent_id,
                    tags=tuple(tags),
                )
            )
        for child in nested:
            walk(child, folder_id)

    walk(root, None)
    return entries


def parse_folder_listing_doc(
    xml: Union[bytes, str], warnings: Optional[List[str]] = None
) -> List[FolderListingEntry]:
    """Flatten a ``fs:folder`` listing; parents precede their children."""
    return _folder_listing(
        _expect_root(xml, "folder"), warnings if warnings is not None else []
    )


_LIFESTREAM_FIELDS = {
    "senderId": "sender_id",
    "senderGroupId": "sender_group_id",
    "senderName": "sender_name",
    "receiverId": "receiver_id",
    "receiverGroupId": "receiver_group_id",
    "receiverName": "receiver_name",
    "parentFolder": "parent_folder",
}
_LIFESTREAM_TIME_KEYS = ("created", "published", "updated", "time")


def _lifestream(root: etree._Element, warnings: List[str]) -> List[LifestreamEvent]:
    events = []
    for element in root.iter():
        if _localname(element) != "event":
            continue
        attrs = {etree.QName(k).localname: v for k, v in element.attrib.items()}
        fields = {field: attrs.get(key) for key, field in _LIFESTREAM_FIELDS.items()}
        when = next((attrs[k] for k in _LIFESTREAM_TIME_KEYS if attrs.get(k)), None)
        events.append(
            LifestreamEvent(
                **fields,
                seen=_bool(attrs.get("seen")),
                time=_time(when, warnings),
                raw=_raw(element),
            )
        )
    return events


def parse_lifestream_doc(xml: Union[bytes, str]) -> List[LifestreamEvent]:
    """
    One LifestreamEvent per ``event`` element anywhere in the document

    The root element is not checked; only the ``event`` attributes are known.
    """
    return _lifestream(_parse_xml(xml), [])


def dispatch_document(
    xml: Union[bytes, str], origin: str = "", source: Optional[EvidenceRef] = None
) -> WebDocument:
    """
    Classify a document by its root element and parse it

    Raises:
        MalformedXml: not well-formed
        WrongDocType: not one of the CloudMe document types
    """
    root = _parse_xml(xml)
    name = _localname(root)
    warnings: List[str] = []
    common = {"origin": origin, "source": source}

    if name == "webshares":
        document = WebDocument(
            kind=DocumentKind.WEBSHARES,
            metadata=_opensearch(root),
            webshares=tuple(_webshares(root, warnings)),
            **common,
        )
    elif name == "favorites":
        document = WebDocument(
            kind=DocumentKind.FAVORITES,
            metadata=_opensearch(root),
            favorites=tuple(_favorites(root, warnings)),
            **common,
        )
    elif name == "sync":
        document = WebDocument(
            kind=DocumentKind.DEVICE_SYNC, device=_device(root, warnings), **common
        )
    elif name == "folder":
        document = WebDocument(
            kind=DocumentKind.FOLDER_LISTING,
            folders=tuple(_folder_listing(root, warnings)),
            **common,
        )
    elif name == "lifestream" or any(_localname(e) == "event" for e in root.iter()):
        document = WebDocument(
            kind=DocumentKind.LIFESTREAM,
            lifestream=tuple(_lifestream(root, warnings)),
            **common,
        )
    else:
        raise WrongDocType("webshares|favorites|sync|folder|lifestream", name)

    return document.model_copy(update={"warnings": tuple(warnings)})


# --------------------------------------------------------------------------
# Cache tree harvesting
# --------------------------------------------------------------------------


class ContentFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    folder_id: int
    document_id: int
    path: str


class ThumbnailFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    folder_id: int
    document_id: int
    thumbnail_id: int
    path: str


class CacheHarvest(BaseModel):
    model_config = ConfigDict(frozen=True)

    root: str
    documents: Tuple[WebDocument, ...] = ()
    content_files: Tuple[ContentFile, ...] = ()
    thumbnails: Tuple[ThumbnailFile, ...] = ()
    warnings: Tuple[str, ...] = ()


def find_cache_root(directory: Path) -> Path:
    """Locate the ``v1`` directory at or below ``directory``."""
    directory = Path(directory)
    if directory.name == "v1" and directory.is_dir():
        return directory
    preferred = directory.joinpath(*CACHE_ROOT)
    if preferred.is_dir():
        return preferred
    candidates = sorted(
        Path(current) / "v1"
        for current, dirs, _ in os.walk(directory)
        if "v1" in dirs
    )
    if not candidates:
        raise RootNotFound(f"no v1 directory under {directory}")
    return candidates[0]


def _harvest_file(
    v1: Path, path: Path
) -> Tuple[Optional[WebDocument], Optional[ContentFile], Optional[ThumbnailFile], List[str]]:
    parts = path.relative_to(v1).parts
    if len(parts) >= 5 and parts[0] == "documents" and parts[3] == "1":
        if parts[1].isdigit() and parts[2].isdigit():
            return None, ContentFile(
                folder_id=int(parts[1]), document_id=int(parts[2]), path=str(path)
            ), None, []
    if len(parts) == 4 and parts[0] == "documents" and parts[3].isdigit() and parts[3] != "1":
        if parts[1].isdigit() and parts[2].isdigit():
            return None, None, ThumbnailFile(
                folder_id=int(parts[1]),
                document_id=int(parts[2]),
                thumbnail_id=int(parts[3]),
                path=str(path),
            ), []

    try:
        with open(path, "rb") as f:
            head = f.read(_SNIFF_BYTES)
            if not head.lstrip().startswith(b"<"):
                return None, None, None, []
            data = head + f.read()
    except OSError as e:
        return None, None, None, [f"cannot read {path}: {e}"]

    source = EvidenceRef(path=str(path), artefact_class=ArtefactClass.WEB_CACHE)
    try:
        document = dispatch_document(data, origin="/".join(parts), source=source)
    except MalformedXml as e:
        return None, None, None, [f"{path}: malformed XML ({e})"]
    except WrongDocType as e:
        logger.debug(f"{path}: {e}")
        return None, None, None, []
    return document, None, None, list(document.warnings)


def harvest_cache_dir(directory: Path, workers: int = 4) -> CacheHarvest:
    """
    Walk an extracted web-cache tree

    ``documents/<fid>/<did>/1/*`` are viewed file contents,
    ``documents/<fid>/<did>/<n>`` (numeric n other than 1) are thumbnails,
    everything else that looks like XML is dispatched by root element.

    Raises:
        RootNotFound: no ``v1`` directory exists
    """
    v1 = find_cache_root(directory)
    files = sorted(
        Path(current) / name
        for current, _, names in os.walk(v1, followlinks=False)
        for name in names
    )

    documents: List[WebDocument] = []
    content: List[ContentFile] = []
    thumbnails: List[ThumbnailFile] = []
    warnings: List[str] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        for document, content_file, thumbnail, notes in executor.map(
            lambda p: _harvest_file(v1, p), files
        ):
            if document is not None:
                documents.append(document)
            if content_file is not None:
                content.append(content_file)
            if thumbnail is not None:
                thumbnails.append(thumbnail)
            for note in notes:
                logger.warning(note)
                warnings.append(note)

    logger.info(
        f"Harvested {v1}: {len(documents)} documents, {len(content)} content files, "
        f"{len(thumbnails)} thumbnails"
    )
    return CacheHarvest(
        root=str(v1),
        documents=tuple(documents),
        content_files=tuple(content),
        thumbnails=tuple(thumbnails),
        warnings=tuple(warnings),
    )


# --------------------------------------------------------------------------
# Browser history
# --------------------------------------------------------------------------


class HistoryVisit(BaseModel):
    model_config = ConfigDict(frozen=True)

    url: str
    visited: Optional[Timestamp] = None
    title: Optional[str] = None
    source: EvidenceRef


def _lenient_time(raw: str, warnings: List[str]) -> Optional[Timestamp]:
    raw = raw.strip()
    if not raw:
        return None
    try:
        return parse_any_timestamp(raw)
    except UnparsableTimestamp:
        pass
    try:
        return timestamp_from_datetime(date_parser.parse(raw), raw)
    except (ValueError, OverflowError):
        message = f"history visit time not understood: {raw!r}"
        logger.warning(message)
        warnings.append(message)
        return None


def _read_history_text(path: Path, source: EvidenceRef, warnings: List[str]) -> List[HistoryVisit]:
    # CSV quotes fields; plain lists separate the visit time by a tab only,
    # since sync URLs may carry a comma
    text = path.read_text(encoding="utf-8", errors="replace")
    delimiter = "," if path.suffix.lower() == ".csv" else "\t"
    visits = []
    for row in csv.reader(io.StringIO(text), delimiter=delimiter):
        if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
            continue
        url = row[0].strip()
        if url.lower() == "url":
            continue
        visited = _lenient_time(row[1], warnings) if len(row) > 1 else None
        visits.append(HistoryVisit(url=url, visited=visited, source=source))
    return visits


def _chrome_visits(connection: sqlite3.Connection, source: EvidenceRef) -> List[HistoryVisit]:
    urls = {
        as_int(row["id"]): row
        for row in fetch_table(connection, "urls", ("id", "url"), ("title",))
    }
    visits = []
    for row in fetch_table(connection, "visits", ("url", "visit_time")):
        target = urls.get(as_int(row["url"]))
        if target is None:
            continue
        micros = as_int(row["visit_time"])
        visits.append(
            HistoryVisit(
                url=as_text(target["url"]) or "",
                visited=timestamp_from_webkit_micros(micros) if micros else None,
                title=as_text(target["title"]),
                source=source,
            )
        )
    return visits


def _firefox_visits(
    connection: sqlite3.Connection, places_table: str, visits_table: str, source: EvidenceRef
) -> List[HistoryVisit]:
    places = {
        as_int(row["id"]): row
        for row in fetch_table(connection, places_table, ("id", "url"), ("title",))
    }
    visits = []
    for row in fetch_table(connection, visits_table, ("place_id", "visit_date")):
        target = places.get(as_int(row["place_id"]))
        if target is None:
            continue
        micros = as_int(row["visit_date"])
        visits.append(
            HistoryVisit(
                url=as_text(target["url"]) or "",
                visited=timestamp_from_unix_micros(micros) if micros else None,
                title=as_text(target["title"]),
                source=source,
            )
        )
    return visits


def read_history_file(
    path: Path, warnings: Optional[List[str]] = None
) -> List[HistoryVisit]:
    """
    Read browser history from a Chrome or Firefox store, or a text/CSV list

    Text lists hold one URL per line, optionally followed by a comma or tab
    and a visit time in any format python-dateutil understands.
    """
    path = Path(path)
    warnings = warnings if warnings is not None else []
    source = EvidenceRef(path=str(path), artefact_class=ArtefactClass.BROWSER_HISTORY)

    if not is_sqlite_file(path):
        return _read_history_text(path, source, warnings)

    with open_readonly(path) as connection:
        tables = list_tables(connection)
        if "urls" in tables and "visits" in tables:
            visits = _chrome_visits(connection, source)
        elif "moz_places" in tables and "moz_historyvisits" in tables:
            visits = _firefox_visits(connection, "moz_places", "moz_historyvisits", source)
        elif "places" in tables and "historyvisits" in tables:
            visits = _firefox_visits(connection, "places", "historyvisits", source)
        else:
            raise SchemaMismatch("urls|moz_places", "url")
    logger.info(f"Read {len(visits)} visits from {path}")
    return visits


_VISIT_EVENTS = {
    UrlKind.FOLDER_ACCESS_BY_NAME: EventKind.FOLDER_ACCESSED,
    UrlKind.FOLDER_ACCESS_BY_ID: EventKind.FOLDER_ACCESSED,
    UrlKind.FOLDER_SYNC: EventKind.FOLDER_ACCESSED,
    UrlKind.FILE_ACCESS_OR_DOWNLOAD: EventKind.FILE_VIEWED,
    UrlKind.SHARED_FILE_DOWNLOAD: EventKind.FILE_DOWNLOADED,
    UrlKind.WEB_SHARE_ACCESS: EventKind.WEB_SHARE_ACCESSED,
    UrlKind.LOGOUT: EventKind.LOGOUT,
}


def events_from_history(visits: Iterable[HistoryVisit]) -> List[ForensicEvent]:
    events = []
    for visit in visits:
        classification = classify_url(visit.url)
        kind = _VISIT_EVENTS.get(classification.kind)
        if kind is None:
            continue
        time = visit.visited
        if time is None and classification.epoch_ms is not None:
            try:
                time = normalize_timestamp(
                    str(classification.epoch_ms), TimestampHint.EPOCH_MILLIS
                )
            except UnparsableTimestamp:
                time = None
        attributes = {"url": visit.url, "url_kind": classification.kind.value}
        if classification.folder_id is not None:
            attributes["folder_id"] = str(classification.folder_id)
        if classification.document_id is not None:
            attributes["document_id"] = str(classification.document_id)
        if classification.epoch_ms is not None:
            attributes["epoch_ms"] = str(classification.epoch_ms)
        events.append(
            ForensicEvent(
                time=time,
                kind=kind,
                object=classification.filename or classification.folder_name
                or (str(classification.folder_id) if classification.folder_id else None),
                attributes=attributes,
                source=visit.source,
            )
        )
    return events


def classify_visits(visits: Iterable[HistoryVisit]) -> List[Dict[str, Any]]:
    """One classification record per visit, with its visit time and store path."""
    records = []
    for visit in visits:
        record: Dict[str, Any] = classify_url(visit.url).model_dump(mode="json")
        record["visited"] = visit.visited.isoformat() if visit.visited else None
        record["title"] = visit.title
        record["source"] = visit.source.path
        records.append(record)
    return records


# --------------------------------------------------------------------------
# Timeline events
# --------------------------------------------------------------------------


def _share_attributes(record: WebShareRecord) -> Dict[str, str]:
    attributes = {"webshare_id": str(record.id)}
    if record.user_id is not None:
        attributes["user_id"] = str(record.user_id)
    if record.folder_id is not None:
        attributes["folder_id"] = str(record.folder_id)
    if record.access is not None:
        attributes["access"] = record.access.value
    if record.visibility:
        attributes["visibility"] = record.visibility
    if record.description:
        attributes["description"] = record.description
    if record.password:
        attributes["password"] = record.password
    return attributes


def _favorite_attributes(record: FavoriteRecord) -> Dict[str, str]:
    attributes = {"favorite_id": str(record.id)}
    for key, value in (
        ("webshare_id", record.webshare_id),
        ("folder_id", record.folder_id),
        ("sharing_user_id", record.sharing_user_id),
        ("user_id", record.user_id),
    ):
        if value is not None:
            attributes[key] = str(value)
    if record.description:
        attributes["description"] = record.description
    if record.password:
        attributes["password"] = record.password
    return attributes


def _document_events(document: WebDocument, source: EvidenceRef) -> List[ForensicEvent]:
    events: List[ForensicEvent] = []
    if document.kind == DocumentKind.WEBSHARES:
        for share in document.webshares:
            events.append(
                ForensicEvent(
                    time=share.created,
                    kind=EventKind.SHARE_CREATED,
                    object=share.folder_name or share.name,
                    attributes=_share_attributes(share),
                    source=source,
                )
            )
    elif document.kind == DocumentKind.FAVORITES:
        for favorite in document.favorites:
            events.append(
                ForensicEvent(
                    time=favorite.created,
                    kind=EventKind.WEB_SHARE_ACCESSED,
                    actor=favorite.sharing_user_name,
                    object=favorite.name,
                    attributes=_favorite_attributes(favorite),
                    source=source,
                )
            )
    elif document.kind == DocumentKind.DEVICE_SYNC and document.device is not None:
        device = document.device
        identity = {}
        if device.device_name:
            identity["device_name"] = device.device_name
        if device.client_id:
            identity["client_id"] = device.client_id
        if identity:
            events.append(
                ForensicEvent(kind=EventKind.IDENTITY_FOUND, attributes=identity, source=source)
            )
        for folder in device.folders:
            attributes = {"folder_id": str(folder.folder_id)} if folder.folder_id else {}
            if device.device_name:
                attributes["device_name"] = device.device_name
            if folder.last_sync is not None:
                events.append(
                    ForensicEvent(
                        time=folder.last_sync,
                        kind=EventKind.SYNC_COMPLETED,
                        object=folder.path or folder.name,
                        attributes=attributes,
                        source=source,
                    )
                )
            if folder.inactivated:
                events.append(
                    ForensicEvent(
                        time=folder.last_sync,
                        kind=EventKind.FOLDER_INACTIVATED,
                        object=folder.path or folder.name,
                        attributes=attributes,
                        source=source,
                    )
                )
    elif document.kind == DocumentKind.FOLDER_LISTING:
        for entry in document.folders:
            attributes = {"folder_id": str(entry.folder_id)}
            if entry.parent_id is not None:
                attributes["parent_id"] = str(entry.parent_id)
            if entry.tags:
                attributes["tags"] = ",".join(
                    f"{t.group or ''}:{t.type or ''}:{t.value or ''}" for t in entry.tags
                )
            events.append(
                ForensicEvent(
                    kind=EventKind.FOLDER_ACCESSED,
                    object=entry.name or str(entry.folder_id),
                    attributes=attributes,
                    source=source,
                )
            )
    elif document.kind == DocumentKind.LIFESTREAM:
        for item in document.lifestream:
            events.append(
                ForensicEvent(
                    time=item.time,
                    kind=EventKind.SHARE_CREATED,
                    actor=item.sender_name,
                    object=item.parent_folder,
                    attributes={k: v for k, v in item.raw},
                    source=source,
                )
            )
    return events


def events_from_documents(
    documents: Sequence[WebDocument], source: Optional[EvidenceRef] = None
) -> List[ForensicEvent]:
    events: List[ForensicEvent] = []
    for document in documents:
        document_source = document.source or source or EvidenceRef(
            path=document.origin or "web-cache", artefact_class=ArtefactClass.WEB_CACHE
        )
        events.extend(_document_events(document, document_source))
    return events


def events_from_harvest(harvest: CacheHarvest) -> List[ForensicEvent]:
    """Document events plus one undated FileViewed per content file and thumbnail."""
    events = events_from_documents(harvest.documents)
    for item in harvest.content_files:
        events.append(
            ForensicEvent(
                kind=EventKind.FILE_VIEWED,
                object=Path(item.path).name,
                attributes={"folder_id": str(item.folder_id), "document_id": str(item.document_id)},
                source=EvidenceRef(path=item.path, artefact_class=ArtefactClass.WEB_CACHE),
            )
        )
    for thumb in harvest.thumbnails:
        events.append(
            ForensicEvent(
                kind=EventKind.FILE_VIEWED,
                object=Path(thumb.path).name,
                attributes={
                    "folder_id": str(thumb.folder_id),
                    "document_id": str(thumb.document_id),
                    "thumbnail_id": str(thumb.thumbnail_id),
                },
                source=EvidenceRef(path=thumb.path, artefact_class=ArtefactClass.WEB_CACHE),
            )
        )
    return events
