"""
Report emitters: JSON Lines, CSV and a human-readable summary.

Every emitter is byte-deterministic for a given report. Secrets stay masked
unless the report (or the caller) asks for them to be revealed.
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import orjson
import pandas as pd

from cloudme_scope.case_service import CaseReport
from cloudme_scope.config_artefact_service import IdentityFact
from cloudme_scope.models import Account, ForensicEvent, mask_secrets

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "time",
    "kind",
    "actor",
    "object",
    "attributes",
    "source_path",
    "source_offset",
    "source_class",
)


class ReportFormat(str, Enum):
    JSONL = "Jsonl"
    CSV = "Csv"
    SUMMARY = "Summary"


def _dumps(record: Any) -> bytes:
    return orjson.dumps(record, option=orjson.OPT_NON_STR_KEYS)


def account_record(account: Account) -> Dict[str, Any]:
    return {
        "user_id": account.user_id,
        "username": account.username,
        "device_name": account.device_name,
        "created": account.created.isoformat() if account.created else None,
        "source": account.source.path,
    }


def identity_record(fact: IdentityFact, reveal_secrets: bool = False) -> Dict[str, Any]:
    record = {
        "username": fact.username,
        "client_id": fact.client_id,
        "device_name": fact.device_name,
        "password": fact.password,
        "last_upload": fact.last_upload.isoformat() if fact.last_upload else None,
        "sid": fact.sid,
        "source": fact.source.path,
    }
    return mask_secrets(record, reveal_secrets)


def header_record(report: CaseReport, reveal_secrets: bool = False) -> Dict[str, Any]:
    return {
        "type": "header",
        "version": report.version,
        "root": report.root,
        "generated_at": report.generated_at.isoformat(),
        "params": report.params,
        "hits": [hit.to_record() for hit in report.hits],
        "downloads": [hit.to_record() for hit in report.downloads],
        "event_count": len(report.events),
        "warnings": list(report.warnings),
        "accounts": [account_record(a) for a in report.accounts],
        "identities": [identity_record(f, reveal_secrets) for f in report.identities],
        "assumptions": list(report.assumptions),
    }


def events_to_jsonl(events: Sequence[ForensicEvent], reveal_secrets: bool = False) -> bytes:
    return b"".join(_dumps(e.to_record(reveal_secrets)) + b"\n" for e in events)


def records_to_jsonl(records: Sequence[Dict[str, Any]]) -> bytes:
    return b"".join(_dumps(r) + b"\n" for r in records)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace(";", "\\;")


def flatten_attributes(attributes: Dict[str, str]) -> str:
    """
    ``key=value;`` per attribute in insertion order; a backslash or semicolon
    inside a key or value is preceded by a backslash.
    """
    return "".join(f"{_escape(k)}={_escape(v)};" for k, v in attributes.items())


def events_to_frame(events: Sequence[ForensicEvent], reveal_secrets: bool = False) -> pd.DataFrame:
    rows: List[Dict[str, str]] = []
    for event in events:
        rows.append(
            {
                "time": event.time.isoformat() if event.time else "",
                "kind": event.kind.value,
                "actor": event.actor or "",
                "object": event.object or "",
                "attributes": flatten_attributes(event.masked_attributes(reveal_secrets)),
                "source_path": event.source.path,
                "source_offset": "" if event.source.offset is None else str(event.source.offset),
                "source_class": event.source.artefact_class.value,
            }
        )
    return pd.DataFrame(rows, columns=list(CSV_COLUMNS), dtype=str)


def events_to_csv(events: Sequence[ForensicEvent], reveal_secrets: bool = False) -> bytes:
    frame = events_to_frame(events, reveal_secrets)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def _kind_counts(events: Sequence[ForensicEvent]) -> List[str]:
    counts = pd.Series([e.kind.value for e in events], dtype=str).value_counts()
    return [f"  {kind}: {int(counts[kind])}" for kind in sorted(counts.index)]


def render_event_summary(events: Sequence[ForensicEvent], warnings: Sequence[str] = ()) -> bytes:
    lines = [f"events: {len(events)}", f"warnings: {len(warnings)}", "", "events per kind:"]
    lines.extend(_kind_counts(events))
    if warnings:
        lines.extend(["", "warnings:"])
        lines.extend(f"  {w}" for w in warnings)
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_summary(report: CaseReport, reveal_secrets: bool = False) -> bytes:
    """Counts per event kind, then the identity table."""
    lines = [
        f"cloudme-scope {report.version}",
        f"evidence root: {report.root}",
        f"generated at: {report.generated_at.isoformat()}",
        f"artefact hits: {len(report.hits)}",
        f"events: {len(report.events)}",
        f"warnings: {len(report.warnings)}",
        "",
        "events per kind:",
    ]
    lines.extend(_kind_counts(report.events))

    identities = [identity_record(f, reveal_secrets) for f in report.identities]
    identities.extend(
        {"username": a.username, "device_name": a.device_name, "source": a.source.path}
        for a in report.accounts
    )
    lines.extend(["", "identities:"])
    if identities:
        frame = pd.DataFrame(
            identities, columns=["username", "client_id", "device_name", "password", "source"]
        ).fillna("")
        lines.extend("  " + row for row in frame.to_string(index=False).splitlines())
    else:
        lines.append("  (none)")

    if report.warnings:
        lines.extend(["", "warnings:"])
        lines.extend(f"  {w}" for w in report.warnings)
    return ("\n".join(lines) + "\n").encode("utf-8")


def emit_report(
    report: CaseReport,
    fmt: ReportFormat = ReportFormat.JSONL,
    reveal_secrets: Optional[bool] = None,
) -> bytes:
    reveal = report.reveal_secrets if reveal_secrets is None else reveal_secrets
    fmt = ReportFormat(fmt)
    if fmt == ReportFormat.JSONL:
        return _dumps(header_record(report, reveal)) + b"\n" + events_to_jsonl(report.events, reveal)
    if fmt == ReportFormat.CSV:
        return events_to_csv(report.events, reveal)
    return render_summary(report, reveal)


def records_to_csv(
    records: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None
) -> bytes:
    frame = pd.DataFrame(list(records), columns=list(columns) if columns else None)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")
