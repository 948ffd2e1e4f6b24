from enum import Enum

import pytz
from datetime import datetime
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from typing import Any, Dict, Optional, Tuple

SECRET_ATTRIBUTES = frozenset({"password"})
SECRET_MASK = "***"


class ArtefactClass(str, Enum):
    """Kinds of evidence an event can originate from"""

    DATABASE = "Database"
    LOG = "Log"
    WEB_CACHE = "WebCache"
    CONFIG = "Config"
    MEMORY_DUMP = "MemoryDump"
    BROWSER_HISTORY = "BrowserHistory"


class EventKind(str, Enum):
    """Timeline vocabulary shared by every parser"""

    LOGIN = "Login"
    LOGOUT = "Logout"
    SYNC_COMPLETED = "SyncCompleted"
    SYNC_FAILED = "SyncFailed"
    FILE_MODIFIED = "FileModified"
    FOLDER_CREATED = "FolderCreated"
    FOLDER_DELETED = "FolderDeleted"
    FOLDER_INACTIVATED = "FolderInactivated"
    FILE_VIEWED = "FileViewed"
    FILE_DOWNLOADED = "FileDownloaded"
    FOLDER_ACCESSED = "FolderAccessed"
    WEB_SHARE_ACCESSED = "WebShareAccessed"
    SHARE_CREATED = "ShareCreated"
    CREDENTIAL_FOUND = "CredentialFound"
    IDENTITY_FOUND = "IdentityFound"


class TimestampHint(str, Enum):
    SQLITE_DATETIME = "SqliteDatetime"
    ISO8601_Z = "Iso8601Z"
    LOG_PREFIX = "LogPrefix"
    EPOCH_MILLIS = "EpochMillis"


class Timestamp(BaseModel):
    """A UTC instant plus the exact text it was read from"""

    model_config = ConfigDict(frozen=True)

    instant: datetime
    raw: str

    @field_validator("instant")
    @classmethod
    def _must_be_aware(cls, value: datetime) -> datetime:
        if value.tzinfo is None or value.utcoffset() is None:
            raise ValueError("instant must carry a timezone")
        return value

    def isoformat(self) -> str:
        utc = self.instant.astimezone(pytz.UTC)
        text = utc.strftime("%Y-%m-%dT%H:%M:%S")
        if utc.microsecond:
            text += f".{utc.microsecond // 1000:03d}"
        return text + "Z"


class EvidenceRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    offset: Optional[int] = None
    artefact_class: ArtefactClass

    @model_validator(mode="after")
    def _check(self) -> "EvidenceRef":
        if not self.path:
            raise ValueError("evidence path must be non-empty")
        if self.offset is not None:
            if self.artefact_class != ArtefactClass.MEMORY_DUMP:
                raise ValueError("offsets belong to memory dump evidence only")
            if self.offset < 0:
                raise ValueError("offset must be non-negative")
        return self

    def to_record(self) -> Dict[str, Any]:
        return {
            "path": self.path,
            "offset": self.offset,
            "artefact_class": self.artefact_class.value,
        }


class ForensicEvent(BaseModel):
    """One normalized, timestamped fact with its evidence provenance"""

    model_config = ConfigDict(frozen=True)

    time: Optional[Timestamp] = None
    kind: EventKind
    actor: Optional[str] = None
    object: Optional[str] = None
    attributes: Tuple[Tuple[str, str], ...] = ()
    source: EvidenceRef

    @field_validator("attributes", mode="before")
    @classmethod
    def _ordered_pairs(cls, value: Any) -> Any:
        if isinstance(value, dict):
            value = tuple((str(k), v) for k, v in value.items())
        pairs = tuple(value)
        keys = [k for k, _ in pairs]
        if len(keys) != len(set(keys)):
            raise ValueError("attribute keys must be unique")
        for key, item in pairs:
            if not isinstance(item, str):
                raise ValueError(f"attribute {key!r} must be a string")
        return pairs

    def attribute(self, key: str) -> Optional[str]:
        for k, v in self.attributes:
            if k == key:
                return v
        return None

    def masked_attributes(self, reveal_secrets: bool = False) -> Dict[str, str]:
        rendered: Dict[str, str] = {}
        secret_seen = False
        for key, value in self.attributes:
            if key in SECRET_ATTRIBUTES and not reveal_secrets:
                rendered[key] = SECRET_MASK
                secret_seen = True
            else:
                rendered[key] = value
        if secret_seen:
            rendered["secret_present"] = "true"
        return rendered

    def to_record(self, reveal_secrets: bool = False) -> Dict[str, Any]:
        return {
            "time": self.time.isoformat() if self.time else None,
            "kind": self.kind.value,
            "actor": self.actor,
            "object": self.object,
            "attributes": self.masked_attributes(reveal_secrets),
            "source": self.source.to_record(),
        }


class Account(BaseModel):
    """A row of the desktop cache.db 'user_table'"""

    model_config = ConfigDict(frozen=True)

    user_id: int
    username: str
    device_name: Optional[str] = None
    created: Optional[Timestamp] = None
    source: EvidenceRef

    @model_validator(mode="after")
    def _check(self) -> "Account":
        if self.user_id <= 0:
            raise ValueError("user_id must be positive")
        if not self.username:
            raise ValueError("username must be non-empty")
        return self


def mask_secrets(values: Dict[str, Any], reveal_secrets: bool = False) -> Dict[str, Any]:
    """Mask secret-bearing keys of an arbitrary record in place of emission."""
    if reveal_secrets:
        return dict(values)
    masked: Dict[str, Any] = {}
    secret_seen = False
    for key, value in values.items():
        if key in SECRET_ATTRIBUTES and value:
            masked[key] = SECRET_MASK
            secret_seen = True
        else:
            masked[key] = value
    if secret_seen:
        masked["secret_present"] = True
    return masked
