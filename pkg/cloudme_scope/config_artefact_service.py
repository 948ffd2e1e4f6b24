"""
Config Artefact Service
=======================

Identity and credential facts from configuration artefacts: Windows ``.reg``
exports, the Ubuntu ``Sync.conf``, Mac OS / iOS property lists and the
Android ``shared_prefs/user_data.xml``.
"""

import configparser
import logging
import re
from datetime import datetime
from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, model_validator
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from lxml import etree

from cloudme_scope.exceptions import (
    MalformedXml,
    NoCredentialKeys,
    NotRegExport,
    UnparsableTimestamp,
    Unreadable,
    WrongDocType,
)
from cloudme_scope.models import (
    ArtefactClass,
    EventKind,
    EvidenceRef,
    ForensicEvent,
    Timestamp,
)
from cloudme_scope.utils.plist_reader import is_binary_plist, is_xml_plist, read_plist_bytes
from cloudme_scope.utils.timestamps import parse_any_timestamp, timestamp_from_datetime

logger = logging.getLogger(__name__)

REG_HEADERS = ("Windows Registry Editor Version 5.00", "REGEDIT4")
CLIENT_ID_SUFFIX = "_xClientId"
LAST_UPLOAD_SUFFIX = "_LastUploadTime"

_SECTION = re.compile(r"^\[(-?)(.+)\]$")
_VALUE = re.compile(r'^(?:"((?:[^"\\]|\\.)*)"|(@))\s*=\s*(.*)$')
_CLOUDME_KEY = re.compile(r"\\Software\\CloudMe\\Sync(?:\\|$)", re.IGNORECASE)
_STARTUP_KEY = re.compile(r"\\Software\\CloudMe\\Sync\\startup$", re.IGNORECASE)
_SID_KEY = re.compile(r"^HKEY_USERS\\([^\\]+)\\", re.IGNORECASE)
_XML_PARSER = etree.XMLParser(resolve_entities=False, no_network=True)


class ConfigKind(str, Enum):
    REG = "reg"
    CONF = "conf"
    PLIST = "plist"
    USERDATA = "userdata"


class CredentialOrigin(str, Enum):
    IOS_PLIST = "IosPlist"
    ANDROID_USER_DATA_XML = "AndroidUserDataXml"


class IdentityFact(BaseModel):
    model_config = ConfigDict(frozen=True)

    username: Optional[str] = None
    client_id: Optional[str] = None
    device_name: Optional[str] = None
    password: Optional[str] = None
    last_upload: Optional[Timestamp] = None
    sid: Optional[str] = None
    extras: Tuple[Tuple[str, str], ...] = ()
    source: EvidenceRef

    @model_validator(mode="after")
    def _not_empty(self) -> "IdentityFact":
        if not any(
            (self.username, self.client_id, self.device_name, self.password, self.last_upload)
        ):
            raise ValueError("identity fact carries no identity field")
        return self


def _config_source(source: Optional[EvidenceRef], default: str) -> EvidenceRef:
    return source or EvidenceRef(path=default, artefact_class=ArtefactClass.CONFIG)


def _warn(warnings: Optional[List[str]], message: str) -> None:
    logger.warning(message)
    if warnings is not None:
        warnings.append(message)


# --------------------------------------------------------------------------
# Registry exports
# --------------------------------------------------------------------------


def decode_reg_text(data: bytes) -> str:
    """regedit writes UTF-16LE with a BOM; REGEDIT4 exports are 8-bit."""
    if data.startswith(b"\xff\xfe"):
        return data[2:].decode("utf-16-le", errors="replace")
    if len(data) >= 2 and data[1] == 0 and data[0] != 0:
        return data.decode("utf-16-le", errors="replace")
    if data.startswith(b"\xef\xbb\xbf"):
        return data[3:].decode("utf-8", errors="replace")
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("cp1252", errors="replace")


def _logical_lines(text: str) -> List[str]:
    """Join ``\\``-continued hex value lines."""
    lines: List[str] = []
    pending = ""
    for line in text.splitlines():
        stripped = line.strip()
        if pending:
            stripped = pending + stripped
            pending = ""
        if stripped.endswith("\\") and "=hex" in stripped:
            pending = stripped[:-1]
            continue
        lines.append(stripped)
    if pending:
        lines.append(pending)
    return lines


def _reg_value(raw: str) -> Optional[str]:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if raw.lower().startswith("dword:"):
        return str(int(raw[6:], 16))
    if raw.lower().startswith(("hex(1):", "hex(2):")):
        data = bytes.fromhex(raw.split(":", 1)[1].replace(",", "").replace(" ", ""))
        return data.decode("utf-16-le", errors="replace").rstrip("\x00")
    return None


def _unescape_name(name: str) -> str:
    return name.replace('\\"', '"').replace("\\\\", "\\")


def parse_reg_export(
    text: bytes,
    source: Optional[EvidenceRef] = None,
    warnings: Optional[List[str]] = None,
) -> List[IdentityFact]:
    """
    Identity facts from a regedit export

    ``...\\Software\\CloudMe\\Sync\\startup`` value ``me`` gives the logged-in
    username; any ``<Username>_xClientId`` value under the CloudMe key gives
    that user's client ID. The ``HKEY_USERS\\<SID>`` scope is kept.

    Raises:
        NotRegExport: the first line is not a regedit header
    """
    source = _config_source(source, "registry.reg")
    content = decode_reg_text(text).lstrip("\ufeff")
    lines = _logical_lines(content)
    header = next((line for line in lines if line), "")
    if header not in REG_HEADERS:
        raise NotRegExport(f"unexpected first line {header[:60]!r}")

    facts: List[IdentityFact] = []
    key: Optional[str] = None
    for line in lines:
        if not line or line.startswith(";"):
            continue
        section = _SECTION.match(line)
        if section:
            key = None if section.group(1) else section.group(2)
            continue
        if key is None or not _CLOUDME_KEY.search(key):
            continue
        value_line = _VALUE.match(line)
        if value_line is None:
            continue
        name = _unescape_name(value_line.group(1) or "")
        try:
            value = _reg_value(value_line.group(3))
        except ValueError:
            _warn(warnings, f"{source.path}: undecodable value {name!r} under {key}")
            continue
        if not value:
            continue

        sid_match = _SID_KEY.match(key)
        sid = sid_match.group(1) if sid_match else None
        if _STARTUP_KEY.search(key) and name.lower() == "me":
            facts.append(IdentityFact(username=value, sid=sid, source=source))
        elif name.lower().endswith(CLIENT_ID_SUFFIX.lower()):
            user = name[: -len(CLIENT_ID_SUFFIX)]
            facts.append(
                IdentityFact(username=user or None, client_id=value, sid=sid, source=source)
            )

    logger.info(f"Registry export {source.path}: {len(facts)} identity facts")
    return facts


# --------------------------------------------------------------------------
# Sync.conf
# --------------------------------------------------------------------------


def _read_conf(text: str) -> Optional[configparser.RawConfigParser]:
    parser = configparser.RawConfigParser(strict=False, interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser = configparser.RawConfigParser(strict=False, interpolation=None)
        parser.optionxform = str  # type: ignore[assignment,method-assign]
        try:
            parser.read_string("[General]\n" + text)
        except configparser.Error:
            return None
    except configparser.Error:
        return None
    return parser


def parse_sync_conf(
    text: bytes,
    source: Optional[EvidenceRef] = None,
    warnings: Optional[List[str]] = None,
) -> List[IdentityFact]:
    """
    Identity facts from the Ubuntu client's ``Sync.conf``

    Accepts ``[startup] me=`` as well as a flat ``startup\\me=`` key, and the
    client ID either as ``[<Username>] _xClientId=`` or as a
    ``<Username>_xClientId=`` key in any section.
    """
    source = _config_source(source, "Sync.conf")
    parser = _read_conf(text.decode("utf-8", errors="replace").lstrip("\ufeff"))
    if parser is None:
        _warn(warnings, f"{source.path}: not an INI-style file")
        return []

    facts: List[IdentityFact] = []
    for section in parser.sections():
        for key, value in parser.items(section):
            value = (value or "").strip().strip('"')
            if not value:
                continue
            flat = key.replace("\\", "/").replace(".", "/")
            if (section.lower() == "startup" and key.lower() == "me") or flat.lower() == "startup/me":
                facts.append(IdentityFact(username=value, source=source))
            elif key == CLIENT_ID_SUFFIX:
                facts.append(IdentityFact(username=section, client_id=value, source=source))
            elif key.endswith(CLIENT_ID_SUFFIX):
                user = key[: -len(CLIENT_ID_SUFFIX)].rsplit("/", 1)[-1].rsplit("\\", 1)[-1]
                facts.append(
                    IdentityFact(username=user or None, client_id=value, source=source)
                )
    return facts


# --------------------------------------------------------------------------
# Property lists and shared_prefs
# --------------------------------------------------------------------------


def parse_plist(file: Path) -> Any:
    """
    Decode a binary or XML property list into a tree

    Raises:
        Unreadable: the file cannot be read
        NotPlist / TruncatedPlist / UnsupportedObjectType: see
        :func:`cloudme_scope.utils.plist_reader.read_plist_bytes`
    """
    file = Path(file)
    try:
        data = file.read_bytes()
    except OSError as e:
        logger.error(f"Failed to read plist {file}: {e}")
        raise Unreadable(str(file), f"({e.strerror or e})")
    return read_plist_bytes(data)


def parse_shared_prefs(xml: Union[bytes, str]) -> Dict[str, Any]:
    """
    Decode an Android ``shared_prefs`` map into a plain dict

    Raises:
        MalformedXml: not well-formed
        WrongDocType: root element is not ``map``
    """
    if isinstance(xml, str):
        xml = xml.encode("utf-8")
    try:
        root = etree.fromstring(xml.lstrip(), parser=_XML_PARSER)
    except etree.XMLSyntaxError as e:
        raise MalformedXml(str(e))
    if root.tag != "map":
        raise WrongDocType("map", str(root.tag))

    tree: Dict[str, Any] = {}
    for element in root:
        if not isinstance(element.tag, str):
            continue
        name = element.get("name")
        if name is None:
            continue
        value = element.get("value")
        if element.tag == "string":
            tree[name] = element.text or ""
        elif element.tag in ("int", "long"):
            tree[name] = int(value) if value is not None else None
        elif element.tag == "float":
            tree[name] = float(value) if value is not None else None
        elif element.tag == "boolean":
            tree[name] = (value or "").lower() == "true"
        elif element.tag == "set":
            tree[name] = [child.text or "" for child in element if child.tag == "string"]
        else:
            tree[name] = value if value is not None else element.text
    return tree


def _lookup(tree: Mapping[str, Any], key: str) -> Any:
    if key in tree:
        return tree[key]
    lowered = key.lower()
    for candidate, value in tree.items():
        if isinstance(candidate, str) and candidate.lower() == lowered:
            return value
    return None


def _upload_time(value: Any) -> Optional[Timestamp]:
    if value is None or value == "":
        return None
    if isinstance(value, datetime):
        return timestamp_from_datetime(value)
    try:
        return parse_any_timestamp(str(value))
    except UnparsableTimestamp as e:
        logger.warning(f"last upload time not understood: {e}")
        return None


def extract_mobile_credentials(
    tree: Mapping[str, Any],
    origin: CredentialOrigin,
    source: Optional[EvidenceRef] = None,
) -> IdentityFact:
    """
    Plaintext credentials from the iOS preferences plist or ``user_data.xml``

    Raises:
        NoCredentialKeys: neither ``username`` nor ``password`` is present
    """
    default = (
        "com.xcerion.icloud.iphone.plist"
        if origin == CredentialOrigin.IOS_PLIST
        else "user_data.xml"
    )
    source = _config_source(source, default)
    username = _lookup(tree, "username")
    password = _lookup(tree, "password")
    if username is None and password is None:
        raise NoCredentialKeys(f"{source.path}: no username or password key")

    last_upload = None
    upload_key = None
    if origin == CredentialOrigin.IOS_PLIST:
        if username is not None and f"{username}{LAST_UPLOAD_SUFFIX}" in tree:
            upload_key = f"{username}{LAST_UPLOAD_SUFFIX}"
        else:
            upload_key = next(
                (k for k in tree if isinstance(k, str) and k.endswith(LAST_UPLOAD_SUFFIX)),
                None,
            )
        if upload_key is not None:
            last_upload = _upload_time(tree[upload_key])

    extras = tuple(
        (str(k), str(v))
        for k, v in tree.items()
        if isinstance(v, (str, int, float, bool))
        and str(k).lower() not in ("username", "password")
        and k != upload_key
    )
    return IdentityFact(
        username=str(username) if username is not None else None,
        password=str(password) if password is not None else None,
        last_upload=last_upload,
        extras=extras,
        source=source,
    )


def extract_desktop_identity(
    tree: Mapping[str, Any], source: Optional[EvidenceRef] = None
) -> List[IdentityFact]:
    """
    Username and client IDs from the Mac OS ``com.CloudMe.Sync.plist``

    Keys may be flat (``startup.me``, ``<Username>.xClientId``) or nested
    dictionaries (``startup`` -> ``me``).
    """
    source = _config_source(source, "com.CloudMe.Sync.plist")
    facts: List[IdentityFact] = []

    startup = tree.get("startup")
    me = tree.get("startup.me")
    if me is None and isinstance(startup, Mapping):
        me = startup.get("me")
    if isinstance(me, str) and me:
        facts.append(IdentityFact(username=me, source=source))

    for key, value in tree.items():
        if not isinstance(key, str):
            continue
        if isinstance(value, Mapping):
            nested = value.get("xClientId", value.get(CLIENT_ID_SUFFIX))
            if isinstance(nested, str) and nested:
                facts.append(IdentityFact(username=key, client_id=nested, source=source))
            continue
        if not isinstance(value, str) or not value:
            continue
        for suffix in (".xClientId", CLIENT_ID_SUFFIX):
            if key.endswith(suffix) and key != suffix:
                facts.append(
                    IdentityFact(username=key[: -len(suffix)], client_id=value, source=source)
                )
                break
    return facts


# --------------------------------------------------------------------------
# Dispatch and events
# --------------------------------------------------------------------------


def detect_config_kind(path: Path, data: bytes) -> Optional[ConfigKind]:
    """Magic bytes first, then the file name."""
    if is_binary_plist(data) or is_xml_plist(data):
        return ConfigKind.PLIST
    text = decode_reg_text(data[:256]).lstrip("\ufeff").lstrip()
    if text.startswith(REG_HEADERS):
        return ConfigKind.REG
    if text.startswith("<") and b"<map" in data[:1024]:
        return ConfigKind.USERDATA

    suffix = Path(path).suffix.lower()
    by_suffix = {
        ".reg": ConfigKind.REG,
        ".conf": ConfigKind.CONF,
        ".plist": ConfigKind.PLIST,
        ".xml": ConfigKind.USERDATA,
    }
    if suffix in by_suffix:
        return by_suffix[suffix]
    if text.startswith("["):
        return ConfigKind.CONF
    return None


def parse_config_file(
    path: Path,
    kind: Optional[ConfigKind] = None,
    warnings: Optional[List[str]] = None,
) -> List[IdentityFact]:
    """Read one configuration artefact and return its identity facts."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        logger.error(f"Failed to read config {path}: {e}")
        raise Unreadable(str(path), f"({e.strerror or e})")

    source = EvidenceRef(path=str(path), artefact_class=ArtefactClass.CONFIG)
    kind = kind or detect_config_kind(path, data)
    if kind is None:
        _warn(warnings, f"{path}: configuration kind not recognised")
        return []

    if kind == ConfigKind.REG:
        return parse_reg_export(data, source, warnings)
    if kind == ConfigKind.CONF:
        return parse_sync_conf(data, source, warnings)
    if kind == ConfigKind.USERDATA:
        tree = parse_shared_prefs(data)
        return [extract_mobile_credentials(tree, CredentialOrigin.ANDROID_USER_DATA_XML, source)]

    tree = read_plist_bytes(data)
    if not isinstance(tree, Mapping):
        _warn(warnings, f"{path}: plist top level is not a dictionary")
        return []
    facts = extract_desktop_identity(tree, source)
    try:
        facts.append(extract_mobile_credentials(tree, CredentialOrigin.IOS_PLIST, source))
    except NoCredentialKeys:
        pass
    return facts


def events_from_identity(facts: List[IdentityFact]) -> List[ForensicEvent]:
    """CredentialFound when a password is present, IdentityFound otherwise."""
    events = []
    for fact in facts:
        attributes: Dict[str, str] = {}
        for key in ("client_id", "device_name", "sid", "password"):
            value = getattr(fact, key)
            if value:
                attributes[key] = value
        if fact.last_upload is not None:
            attributes["last_upload"] = fact.last_upload.isoformat()
        kind = EventKind.CREDENTIAL_FOUND if fact.password else EventKind.IDENTITY_FOUND
        events.append(
            ForensicEvent(kind=kind, actor=fact.username, attributes=attributes, source=fact.source)
        )
    return events
