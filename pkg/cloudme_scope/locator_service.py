"""
Locator Service
===============

Walks an evidence root (a mounted or extracted file tree) and reports the
paths where CloudMe clients leave artefacts, per platform.

Rule patterns are matched against the tail of each path: ``<User Profile>``
and ``<UUID>`` tokens match exactly one component, every other component is
an ``fnmatch`` glob, and a pattern ending in ``/`` matches directories only.
Windows rules compare case-insensitively.
"""

import fnmatch
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from pydantic import BaseModel, ConfigDict, field_validator
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import orjson

from cloudme_scope.exceptions import RootUnreadable
from cloudme_scope.models import ArtefactClass

logger = logging.getLogger(__name__)

PROFILE_TOKEN = "<User Profile>"
UUID_TOKEN = "<UUID>"


class PlatformOs(str, Enum):
    WINDOWS = "Windows"
    UBUNTU = "Ubuntu"
    MACOS = "MacOS"
    IOS = "IOS"
    ANDROID = "Android"


PROFILE_ALIASES = {
    "win": PlatformOs.WINDOWS,
    "windows": PlatformOs.WINDOWS,
    "ubuntu": PlatformOs.UBUNTU,
    "macos": PlatformOs.MACOS,
    "ios": PlatformOs.IOS,
    "android": PlatformOs.ANDROID,
}


def _normalize_pattern(pattern: str) -> str:
    # some published locations use backslashes
    return pattern.replace("\\", "/")


class Rule(BaseModel):
    model_config = ConfigDict(frozen=True)

    artefact_class: ArtefactClass
    pattern: str
    # set when the rule matches an alternative spelling of the app container
    variant: Optional[str] = None

    @field_validator("pattern")
    @classmethod
    def _pattern(cls, value: str) -> str:
        value = _normalize_pattern(value).lstrip("/")
        if not value.strip("/"):
            raise ValueError("rule pattern must be non-empty")
        return value

    @property
    def directory_only(self) -> bool:
        return self.pattern.endswith("/")

    @property
    def components(self) -> List[str]:
        return [part for part in self.pattern.split("/") if part]


class PlatformProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    os: PlatformOs
    rules: Tuple[Rule, ...]
    download_dirs: Tuple[str, ...] = ()

    @field_validator("download_dirs")
    @classmethod
    def _download_dirs(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        return tuple(_normalize_pattern(v).lstrip("/") for v in value)

    @property
    def case_sensitive(self) -> bool:
        return self.os != PlatformOs.WINDOWS


class ArtefactHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile: PlatformOs
    artefact_class: ArtefactClass
    path: str
    rule: str
    variant: Optional[str] = None

    def to_record(self) -> Dict[str, Optional[str]]:
        return {
            "profile": self.profile.value,
            "artefact_class": self.artefact_class.value,
            "path": self.path,
            "rule": self.rule,
            "variant": self.variant,
        }


class DownloadHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile: PlatformOs
    directory: str
    path: str
    keyword: Optional[str] = None

    def to_record(self) -> Dict[str, Optional[str]]:
        return {
            "profile": self.profile.value,
            "directory": self.directory,
            "path": self.path,
            "keyword": self.keyword,
        }


def _rule(artefact_class: ArtefactClass, pattern: str, variant: Optional[str] = None) -> Rule:
    return Rule(artefact_class=artefact_class, pattern=pattern, variant=variant)


DB, LOG, CONF = ArtefactClass.DATABASE, ArtefactClass.LOG, ArtefactClass.CONFIG
WEB, HISTORY = ArtefactClass.WEB_CACHE, ArtefactClass.BROWSER_HISTORY

_WEB_CACHE_ROOT = "www.cloudme.com/v1/"


def builtin_profiles() -> List[PlatformProfile]:
    """The five client platforms, one profile each."""
    return [
        PlatformProfile(
            os=PlatformOs.WINDOWS,
            rules=(
                _rule(DB, "<User Profile>/AppData/Local/CloudMe/cache.db"),
                _rule(LOG, "<User Profile>/AppData/Local/CloudMe/logs/"),
                _rule(CONF, "*.reg"),
                _rule(WEB, _WEB_CACHE_ROOT),
                _rule(HISTORY, "<User Profile>/AppData/Local/Google/Chrome/User Data/*/History"),
                _rule(
                    HISTORY,
                    "<User Profile>/AppData/Roaming/Mozilla/Firefox/Profiles/*/places.sqlite",
                ),
            ),
            download_dirs=("<User Profile>/Documents/",),
        ),
        PlatformProfile(
            os=PlatformOs.UBUNTU,
            rules=(
                _rule(DB, "<User Profile>/.local/share/CloudMe/cache.db"),
                _rule(LOG, "<User Profile>/.local/share/CloudMe/logs/"),
                _rule(CONF, "<User Profile>/.config/CloudMe/Sync.conf"),
                _rule(WEB, _WEB_CACHE_ROOT),
                _rule(HISTORY, "<User Profile>/.config/google-chrome/*/History"),
                _rule(HISTORY, "<User Profile>/.mozilla/firefox/*/places.sqlite"),
            ),
            download_dirs=("<User Profile>/Documents/",),
        ),
        PlatformProfile(
            os=PlatformOs.MACOS,
            rules=(
                _rule(DB, "<User Profile>/Library/Application Support/CloudMe/cache.db"),
                _rule(LOG, "<User Profile>/Library/Application Support/CloudMe/logs/"),
                _rule(CONF, "<User Profile>/Library/Preferences/com.CloudMe.Sync.plist"),
                _rule(WEB, _WEB_CACHE_ROOT),
                _rule(
                    HISTORY,
                    "<User Profile>/Library/Application Support/Google/Chrome/*/History",
                ),
                _rule(
                    HISTORY,
                    "<User Profile>/Library/Application Support/Firefox/Profiles/*/places.sqlite",
                ),
            ),
            download_dirs=("<User Profile>/Documents/",),
        ),
        PlatformProfile(
            os=PlatformOs.IOS,
            rules=(
                _rule(DB, "<UUID>/Library/Caches/com.xcerion.icloud.iphone/nsurlcache/Cache.db"),
                _rule(
                    DB,
                    "<UUID>/Library/Caches/com.xcursion.icloud.iphone/nsurlcache/Cache.db",
                    variant="com.xcursion.icloud.iphone",
                ),
                _rule(CONF, "<UUID>/Library/Preferences/com.xcerion.icloud.iphone.plist"),
                _rule(
                    CONF,
                    "<UUID>/Library/Preferences/com.xcursion.icloud.iphone.plist",
                    variant="com.xcursion.icloud.iphone",
                ),
            ),
            download_dirs=("<UUID>/Documents/persistentCache\\",),
        ),
        PlatformProfile(
            os=PlatformOs.ANDROID,
            rules=(
                _rule(DB, "Android/data/com.xcerion.android/cache/db.sdb"),
                _rule(
                    DB,
                    "Android/data/com.excerion.android/cache/db.sdb",
                    variant="com.excerion.android",
                ),
                _rule(CONF, "data/data/com.xcerion.android/"),
                _rule(CONF, "data/data/com.excerion.android/", variant="com.excerion.android"),
                _rule(CONF, "data/data/com.xcerion.android/shared_prefs/user_data.xml"),
                _rule(
                    CONF,
                    "data/data/com.excerion.android/shared_prefs/user_data.xml",
                    variant="com.excerion.android",
                ),
            ),
            download_dirs=(
                "Android/data/com.xcerion.android/cache/files/Downloads/",
                "Android/data/com.excerion.android/cache/files/Downloads/",
            ),
        ),
    ]


def load_custom_profiles(directory: Path) -> List[PlatformProfile]:
    """
    Read ``*.json`` profile definitions from a directory

    Each file holds one profile::

        {"os": "Windows",
         "rules": [{"artefact_class": "Database", "pattern": "..."}],
         "download_dirs": ["<User Profile>/Downloads/"]}
    """
    directory = Path(directory)
    profiles = []
    for file in sorted(directory.glob("*.json")):
        try:
            profiles.append(PlatformProfile.model_validate(orjson.loads(file.read_bytes())))
        except (OSError, ValueError) as e:
            logger.error(f"Failed to load custom profile {file}: {e}")
            raise
    logger.info(f"Loaded {len(profiles)} custom profiles from {directory}")
    return profiles


def select_profiles(
    names: Sequence[str], custom_dir: Optional[Path] = None
) -> List[PlatformProfile]:
    """Built-in profiles by CLI alias (``all`` selects every one), plus custom ones."""
    wanted = {name.lower() for name in names} or {"all"}
    unknown = wanted - set(PROFILE_ALIASES) - {"all"}
    if unknown:
        raise ValueError(f"unknown profile(s): {', '.join(sorted(unknown))}")
    oses = {PROFILE_ALIASES[name] for name in wanted if name != "all"}
    profiles = [p for p in builtin_profiles() if "all" in wanted or p.os in oses]
    if custom_dir:
        profiles.extend(load_custom_profiles(custom_dir))
    return profiles


# --------------------------------------------------------------------------
# Matching
# --------------------------------------------------------------------------


def _component_matches(pattern: str, name: str, case_sensitive: bool) -> bool:
    if pattern == UUID_TOKEN:
        return True
    if pattern.startswith("<") and pattern.endswith(">"):
        return not name.startswith(".")
    if case_sensitive:
        return fnmatch.fnmatchcase(name, pattern)
    return fnmatch.fnmatchcase(name.lower(), pattern.lower())


def match_pattern(
    pattern: str, relative_parts: Sequence[str], is_dir: bool, case_sensitive: bool
) -> bool:
    """True when the trailing components of a path match the pattern."""
    pattern = _normalize_pattern(pattern)
    if pattern.endswith("/") and not is_dir:
        return False
    components = [part for part in pattern.split("/") if part]
    if not components or len(components) > len(relative_parts):
        return False
    tail = relative_parts[len(relative_parts) - len(components) :]
    return all(
        _component_matches(p, name, case_sensitive) for p, name in zip(components, tail)
    )


# --------------------------------------------------------------------------
# Walking
# --------------------------------------------------------------------------


_Entry = Tuple[Tuple[str, ...], bool]


def _walk(top: Path, prefix: Tuple[str, ...], warnings: List[str]) -> List[_Entry]:
    """Every entry below ``top`` as (relative parts, is_dir); symlinks are not followed."""
    entries: List[_Entry] = []
    stack = [(top, prefix)]
    while stack:
        directory, parts = stack.pop()
        try:
            with os.scandir(directory) as it:
                children = list(it)
        except OSError as e:
            message = f"cannot list {directory}: {e.strerror or e}"
            logger.warning(message)
            warnings.append(message)
            continue
        for child in children:
            try:
                is_dir = child.is_dir(follow_symlinks=False)
                if child.is_symlink():
                    continue
            except OSError as e:
                message = f"cannot stat {child.path}: {e.strerror or e}"
                logger.warning(message)
                warnings.append(message)
                continue
            child_parts = parts + (child.name,)
            entries.append((child_parts, is_dir))
            if is_dir:
                stack.append((Path(child.path), child_parts))
    return entries


def _walk_root(root: Path, workers: int, warnings: List[str]) -> List[_Entry]:
    if not root.is_dir():
        raise RootUnreadable(str(root), "(not a directory)")
    try:
        with os.scandir(root) as it:
            top = [child for child in it]
    except OSError as e:
        logger.error(f"Failed to read evidence root {root}: {e}")
        raise RootUnreadable(str(root), f"({e.strerror or e})")

    entries: List[_Entry] = []
    subtrees: List[Tuple[Path, Tuple[str, ...]]] = []
    for child in top:
        if child.is_symlink():
            continue
        is_dir = child.is_dir(follow_symlinks=False)
        entries.append(((child.name,), is_dir))
        if is_dir:
            subtrees.append((Path(child.path), (child.name,)))

    per_tree_warnings: List[List[str]] = [[] for _ in subtrees]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(
            pool.map(
                lambda item: _walk(item[0][0], item[0][1], item[1]),
                zip(subtrees, per_tree_warnings),
            )
        )
    for result in results:
        entries.extend(result)
    for tree_warnings in per_tree_warnings:
        warnings.extend(sorted(tree_warnings))
    return entries


def scan_root(
    root: Path,
    profiles: Optional[Sequence[PlatformProfile]] = None,
    warnings: Optional[List[str]] = None,
    workers: int = 4,
) -> List[ArtefactHit]:
    """
    Match every path under ``root`` against the profiles' rules

    Top-level subtrees are walked in parallel; hits come back sorted by path,
    then profile, then rule, so the result does not depend on scheduling.

    Raises:
        RootUnreadable: the root is missing or cannot be listed
    """
    root = Path(root)
    warnings = warnings if warnings is not None else []
    profiles = list(profiles) if profiles is not None else builtin_profiles()
    entries = _walk_root(root, workers, warnings)

    hits: Set[ArtefactHit] = set()
    for parts, is_dir in entries:
        for profile in profiles:
            for rule in profile.rules:
                if match_pattern(rule.pattern, parts, is_dir, profile.case_sensitive):
                    hits.add(
                        ArtefactHit(
                            profile=profile.os,
                            artefact_class=rule.artefact_class,
                            path=str(root.joinpath(*parts)),
                            rule=rule.pattern,
                            variant=rule.variant,
                        )
                    )

    ordered = sorted(hits, key=lambda h: (h.path, h.profile.value, h.rule))
    logger.info(f"Scanned {root}: {len(entries)} entries, {len(ordered)} artefact hits")
    return ordered


def list_downloads(
    root: Path,
    profiles: Optional[Sequence[PlatformProfile]] = None,
    keywords: Iterable[str] = (),
    warnings: Optional[List[str]] = None,
    workers: int = 4,
) -> List[DownloadHit]:
    """
    Files inside the profiles' default download directories

    With keywords, only files whose names contain one of them
    (case-insensitively) are listed, each tagged with the first keyword found.
    """
    root = Path(root)
    warnings = warnings if warnings is not None else []
    profiles = list(profiles) if profiles is not None else builtin_profiles()
    terms = [k for k in keywords if k]
    entries = _walk_root(root, workers, warnings)

    directories: Dict[Tuple[str, ...], PlatformOs] = {}
    for parts, is_dir in entries:
        if not is_dir:
            continue
        for profile in profiles:
            if any(
                match_pattern(d, parts, True, profile.case_sensitive)
                for d in profile.download_dirs
            ):
                directories.setdefault(parts, profile.os)

    found: Set[DownloadHit] = set()
    for parts, is_dir in entries:
        if is_dir:
            continue
        for depth in range(len(parts) - 1, 0, -1):
            profile_os = directories.get(parts[:depth])
            if profile_os is None:
                continue
            keyword = next((t for t in terms if t.lower() in parts[-1].lower()), None)
            if terms and keyword is None:
                break
            found.add(
                DownloadHit(
                    profile=profile_os,
                    directory=str(root.joinpath(*parts[:depth])),
                    path=str(root.joinpath(*parts)),
                    keyword=keyword,
                )
            )
            break

    return sorted(found, key=lambda h: (h.path, h.profile.value))
