"""
Case Service
============

Runs every extractor over an evidence root and assembles one case report:
locate artefacts, dispatch each hit to its parser, carve memory dumps for the
usernames found along the way, and merge everything into a single timeline.
"""

import logging
import sqlite3
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pytz

from cloudme_scope import __version__
from cloudme_scope.carver_service import BUILTIN_TEMPLATES, carve_file, events_from_carved
from cloudme_scope.config_artefact_service import (
    IdentityFact,
    events_from_identity,
    parse_config_file,
)
from cloudme_scope.desktop_store_service import (
    events_from_cachedb,
    join_sync_history,
    parse_cachedb,
)
from cloudme_scope.exceptions import CloudMeScopeError
from cloudme_scope.locator_service import (
    ArtefactHit,
    DownloadHit,
    PlatformProfile,
    builtin_profiles,
    list_downloads,
    scan_root,
)
from cloudme_scope.log_service import events_from_log, parse_log_dir
from cloudme_scope.mobile_store_service import (
    events_from_dbsdb,
    events_from_nsurlcache,
    join_file_view_history,
    parse_dbsdb,
    parse_nsurlcache,
)
from cloudme_scope.models import (
    Account,
    ArtefactClass,
    EventKind,
    EvidenceRef,
    ForensicEvent,
    Timestamp,
)
from cloudme_scope.timeline_service import merge_event_streams
from cloudme_scope.utils.timestamps import (
    UTC_ASSUMPTION,
    parse_any_timestamp,
    timestamp_from_datetime,
)
from cloudme_scope.webtrace_service import (
    events_from_harvest,
    events_from_history,
    harvest_cache_dir,
    read_history_file,
)

logger = logging.getLogger(__name__)

# Failures a single artefact may raise without aborting the case
ARTEFACT_ERRORS = (CloudMeScopeError, OSError, ValueError, sqlite3.Error)


class CaseOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    profiles: Tuple[PlatformProfile, ...] = Field(default_factory=lambda: tuple(builtin_profiles()))
    reveal_secrets: bool = False
    timestamp: Optional[str] = None
    workers: int = 4
    dumps: Tuple[str, ...] = ()
    anchors: Tuple[str, ...] = ()
    download_keywords: Tuple[str, ...] = ()
    history_files: Tuple[str, ...] = ()
    backward_bound: int = 64
    min_confidence: float = 1.0

    def params(self) -> Dict[str, Any]:
        """Scan parameters as recorded in the report header."""
        return {
            "profiles": [p.os.value for p in self.profiles],
            "reveal_secrets": self.reveal_secrets,
            "workers": self.workers,
            "dumps": list(self.dumps),
            "anchors": list(self.anchors),
            "download_keywords": list(self.download_keywords),
            "history_files": list(self.history_files),
            "backward_bound": self.backward_bound,
            "min_confidence": self.min_confidence,
        }


class CaseReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: str = __version__
    root: str
    params: Dict[str, Any] = Field(default_factory=dict)
    hits: Tuple[ArtefactHit, ...] = ()
    downloads: Tuple[DownloadHit, ...] = ()
    events: Tuple[ForensicEvent, ...] = ()
    warnings: Tuple[str, ...] = ()
    accounts: Tuple[Account, ...] = ()
    identities: Tuple[IdentityFact, ...] = ()
    assumptions: Tuple[str, ...] = (UTC_ASSUMPTION,)
    generated_at: Timestamp
    reveal_secrets: bool = False

    @property
    def exit_code(self) -> int:
        return 1 if self.warnings else 0


class _Outcome(BaseModel):
    events: List[ForensicEvent] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    accounts: List[Account] = Field(default_factory=list)
    identities: List[IdentityFact] = Field(default_factory=list)


def _database(path: Path, workers: int) -> _Outcome:
    outcome = _Outcome()
    name = path.name.lower()
    if name == "db.sdb":
        parsed = parse_dbsdb(path)
        outcome.warnings.extend(parsed.warnings)
        joined = join_file_view_history(parsed, outcome.warnings)
        outcome.events = events_from_dbsdb(joined.rows, parsed.source)
    elif path.parent.name.lower() == "nsurlcache":
        responses = parse_nsurlcache(path, outcome.warnings)
        outcome.events = events_from_nsurlcache(
            responses, EvidenceRef(path=str(path), artefact_class=ArtefactClass.DATABASE)
        )
    else:
        parsed = parse_cachedb(path)
        outcome.warnings.extend(parsed.warnings)
        outcome.accounts = list(parsed.accounts)
        joined = join_sync_history(parsed, outcome.warnings)
        outcome.events = events_from_cachedb(joined.rows, parsed.accounts, parsed.source)
    return outcome


def _logs(path: Path, workers: int) -> _Outcome:
    outcome = _Outcome()
    for file, events in parse_log_dir(path, outcome.warnings):
        source = EvidenceRef(path=str(file), artefact_class=ArtefactClass.LOG)
        outcome.events.extend(events_from_log(events, source))
    return outcome


def _config(path: Path, workers: int) -> _Outcome:
    outcome = _Outcome()
    if path.is_dir():
        # app data root; the files under it are hits of their own
        return outcome
    outcome.identities = parse_config_file(path, warnings=outcome.warnings)
    outcome.events = events_from_identity(outcome.identities)
    return outcome


def _web_cache(path: Path, workers: int) -> _Outcome:
    harvest = harvest_cache_dir(path, workers=workers)
    return _Outcome(events=events_from_harvest(harvest), warnings=list(harvest.warnings))


def _history(path: Path, workers: int) -> _Outcome:
    outcome = _Outcome()
    outcome.events = events_from_history(read_history_file(path, outcome.warnings))
    return outcome


_DISPATCH: Dict[ArtefactClass, Callable[[Path, int], _Outcome]] = {
    ArtefactClass.DATABASE: _database,
    ArtefactClass.LOG: _logs,
    ArtefactClass.CONFIG: _config,
    ArtefactClass.WEB_CACHE: _web_cache,
    ArtefactClass.BROWSER_HISTORY: _history,
}


class CaseService:
    """
    Orchestrates one case over an evidence root
    """

    def __init__(self, options: Optional[CaseOptions] = None):
        self.options = options or CaseOptions()

    def _run_job(self, job: Tuple[ArtefactClass, str]) -> _Outcome:
        artefact_class, path = job
        try:
            return _DISPATCH[artefact_class](Path(path), self.options.workers)
        except ARTEFACT_ERRORS as e:
            message = f"{path}: {e}"
            logger.warning(f"Artefact skipped, {message}")
            return _Outcome(warnings=[message])

    def _carve(self, dump: str, usernames: Sequence[str]) -> _Outcome:
        outcome = _Outcome()
        template = BUILTIN_TEMPLATES["user_table"]
        for username in usernames:
            try:
                records = carve_file(
                    Path(dump),
                    username,
                    template,
                    self.options.backward_bound,
                    self.options.min_confidence,
                )
            except ARTEFACT_ERRORS as e:
                message = f"{dump}: {e}"
                logger.warning(f"Dump skipped, {message}")
                outcome.warnings.append(message)
                break
            outcome.events.extend(events_from_carved(records, dump))
        return outcome

    def _generated_at(self) -> Timestamp:
        if self.options.timestamp:
            return parse_any_timestamp(self.options.timestamp)
        return timestamp_from_datetime(datetime.now(pytz.UTC))

    def run(self, root: Path) -> CaseReport:
        """
        Raises:
            RootUnreadable: the evidence root cannot be listed
        """
        root = Path(root)
        options = self.options
        warnings: List[str] = []
        hits = scan_root(root, options.profiles, warnings, options.workers)
        downloads = list_downloads(
            root, options.profiles, options.download_keywords, [], options.workers
        )

        # one job per path and class, even when several profiles share a rule
        jobs = sorted(
            {(hit.artefact_class, hit.path) for hit in hits},
            key=lambda job: (job[1], job[0].value),
        )
        jobs.extend(
            (ArtefactClass.BROWSER_HISTORY, str(path))
            for path in options.history_files
            if (ArtefactClass.BROWSER_HISTORY, str(path)) not in jobs
        )
        jobs = [job for job in jobs if job[0] in _DISPATCH]
        logger.info(f"Dispatching {len(jobs)} artefacts from {root}")

        with ThreadPoolExecutor(max_workers=max(1, options.workers)) as pool:
            outcomes = list(pool.map(self._run_job, jobs))

        accounts: List[Account] = []
        identities: List[IdentityFact] = []
        streams: List[List[ForensicEvent]] = []
        for outcome in outcomes:
            streams.append(outcome.events)
            warnings.extend(outcome.warnings)
            accounts.extend(outcome.accounts)
            identities.extend(outcome.identities)

        if options.dumps:
            usernames = self._usernames(accounts, identities, streams)
            for dump in options.dumps:
                outcome = self._carve(dump, usernames)
                streams.append(outcome.events)
                warnings.extend(outcome.warnings)

        events = merge_event_streams(streams)
        logger.info(f"Case over {root}: {len(events)} events, {len(warnings)} warnings")
        return CaseReport(
            root=str(root),
            params=options.params(),
            hits=tuple(hits),
            downloads=tuple(downloads),
            events=tuple(events),
            warnings=tuple(warnings),
            accounts=tuple(accounts),
            identities=tuple(identities),
            generated_at=self._generated_at(),
            reveal_secrets=options.reveal_secrets,
        )

    def _usernames(
        self,
        accounts: Sequence[Account],
        identities: Sequence[IdentityFact],
        streams: Sequence[Sequence[ForensicEvent]],
    ) -> List[str]:
        """Anchors for dump carving: explicit ones first, then discovered usernames."""
        names: List[str] = list(self.options.anchors)
        names.extend(account.username for account in accounts)
        names.extend(fact.username for fact in identities if fact.username)
        names.extend(
            event.actor
            for stream in streams
            for event in stream
            if event.kind == EventKind.LOGIN and event.actor
        )
        return list(dict.fromkeys(names))


def run_case(root: Path, options: Optional[CaseOptions] = None) -> CaseReport:
    return CaseService(options).run(root)
