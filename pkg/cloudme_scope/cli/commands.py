import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence

import click

from cloudme_scope import __version__
from cloudme_scope.carver_service import (
    carve_file,
    events_from_carved,
    resolve_template,
    scan_keywords,
)
from cloudme_scope.case_service import CaseOptions, run_case
from cloudme_scope.config_artefact_service import (
    ConfigKind,
    events_from_identity,
    parse_config_file,
)
from cloudme_scope.desktop_store_service import (
    SYNC_HISTORY_HEADERS,
    events_from_cachedb,
    join_sync_history,
    parse_cachedb,
)
from cloudme_scope.exceptions import CloudMeScopeError
from cloudme_scope.locator_service import list_downloads, scan_root, select_profiles
from cloudme_scope.log_service import events_from_log, parse_log_dir, parse_log_file
from cloudme_scope.mobile_store_service import (
    FILE_VIEW_HEADERS,
    events_from_dbsdb,
    events_from_nsurlcache,
    join_file_view_history,
    parse_dbsdb,
    parse_nsurlcache,
)
from cloudme_scope.models import ArtefactClass, EvidenceRef, ForensicEvent
from cloudme_scope.reporting import (
    ReportFormat,
    emit_report,
    events_to_csv,
    events_to_jsonl,
    records_to_csv,
    records_to_jsonl,
    render_event_summary,
)
from cloudme_scope.utils.config import load_config, set_config
from cloudme_scope.utils.logging_setup import configure_logging
from cloudme_scope.webtrace_service import (
    classify_visits,
    events_from_harvest,
    harvest_cache_dir,
    read_history_file,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_FATAL = 2

FORMATS = {"jsonl": ReportFormat.JSONL, "csv": ReportFormat.CSV, "summary": ReportFormat.SUMMARY}
PROFILE_CHOICES = ["win", "ubuntu", "macos", "ios", "android", "all"]


def _write(ctx: click.Context, data: bytes) -> None:
    output: Optional[str] = ctx.obj["output"]
    if output:
        Path(output).write_bytes(data)
    else:
        stream = click.get_binary_stream("stdout")
        stream.write(data)
        stream.flush()


def _finish(ctx: click.Context, warnings: Sequence[str]) -> None:
    ctx.exit(EXIT_WARNINGS if warnings else EXIT_OK)


def _fatal(message: str) -> NoReturn:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_FATAL)


def _guarded(action: Callable[[], Any]) -> Any:
    try:
        return action()
    except (CloudMeScopeError, OSError, ValueError) as e:
        logger.error(f"Command failed: {e}")
        _fatal(str(e))


def _emit_events(
    ctx: click.Context, events: Sequence[ForensicEvent], warnings: Sequence[str]
) -> None:
    fmt: ReportFormat = ctx.obj["format"]
    reveal: bool = ctx.obj["reveal_secrets"]
    if fmt == ReportFormat.JSONL:
        _write(ctx, events_to_jsonl(events, reveal))
    elif fmt == ReportFormat.CSV:
        _write(ctx, events_to_csv(events, reveal))
    else:
        _write(ctx, render_event_summary(events, warnings))
    _finish(ctx, warnings)


def _emit_records(
    ctx: click.Context,
    records: Sequence[Dict[str, Any]],
    warnings: Sequence[str],
    columns: Optional[Sequence[str]] = None,
) -> None:
    fmt: ReportFormat = ctx.obj["format"]
    if fmt == ReportFormat.CSV:
        _write(ctx, records_to_csv(records, columns))
    elif fmt == ReportFormat.SUMMARY:
        _write(ctx, f"records: {len(records)}\nwarnings: {len(warnings)}\n".encode("utf-8"))
    else:
        _write(ctx, records_to_jsonl(records))
    _finish(ctx, warnings)


def _profiles(ctx: click.Context, names: Sequence[str]) -> List[Any]:
    profile_dir = ctx.obj["config"]["locator"].get("profile_dir")
    return _guarded(lambda: select_profiles(list(names), Path(profile_dir) if profile_dir else None))


@click.group()
@click.option(
    "--format",
    "fmt",
    type=click.Choice(sorted(FORMATS)),
    default="jsonl",
    show_default=True,
    help="Output format.",
)
@click.option("--reveal-secrets", is_flag=True, help="Print passwords instead of masking them.")
@click.option("--output", type=click.Path(dir_okay=False), help="Write output to a file.")
@click.option("--timestamp", help="Fixed generated-at time (ISO 8601) for reproducible reports.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--log-level", help="Override the configured log level.")
@click.option("--progress", is_flag=True, help="Show progress bars for byte scans.")
@click.pass_context
def cli(
    ctx: click.Context,
    fmt: str,
    reveal_secrets: bool,
    output: Optional[str],
    timestamp: Optional[str],
    config_path: Optional[str],
    log_level: Optional[str],
    progress: bool,
) -> None:
    """Extract CloudMe client artefacts into a unified forensic timeline."""
    try:
        config = load_config(config_path)
    except (OSError, ValueError) as e:
        raise click.UsageError(str(e))
    set_config(config)
    configure_logging(log_level or config["logging"]["level"], bool(config["logging"]["json"]))

    ctx.ensure_object(dict)
    ctx.obj.update(
        format=FORMATS[fmt],
        reveal_secrets=reveal_secrets or bool(config["case"]["reveal_secrets"]),
        output=output,
        timestamp=timestamp,
        config=config,
        progress=progress,
    )


@cli.command()
def version() -> None:
    """Print the tool version."""
    click.echo(f"cloudme-scope {__version__}")


@cli.command()
@click.argument("root", type=click.Path(file_okay=False))
@click.option("--profile", "profile_names", multiple=True, type=click.Choice(PROFILE_CHOICES))
@click.option("--downloads", "keywords", multiple=True, help="List download-folder files matching.")
@click.pass_context
def scan(ctx: click.Context, root: str, profile_names: Sequence[str], keywords: Sequence[str]) -> None:
    """Locate CloudMe artefacts under an evidence root."""
    profiles = _profiles(ctx, profile_names)
    workers = int(ctx.obj["config"]["locator"]["workers"])
    warnings: List[str] = []
    hits = _guarded(lambda: scan_root(Path(root), profiles, warnings, workers))
    records = [hit.to_record() for hit in hits]
    if keywords:
        downloads = _guarded(lambda: list_downloads(Path(root), profiles, keywords, [], workers))
        records.extend(hit.to_record() for hit in downloads)
    _emit_records(ctx, records, warnings)


def _wants_history(ctx: click.Context, history: bool, events: bool) -> bool:
    # CSV defaults to the joined history table; JSON Lines and summary to events
    if history:
        return True
    return ctx.obj["format"] == ReportFormat.CSV and not events


@cli.command("parse-cachedb")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--history", is_flag=True, help="Emit the joined sync history rows (default for csv).")
@click.option("--events", "as_events", is_flag=True, help="Emit timeline events even for csv.")
@click.pass_context
def parse_cachedb_cmd(ctx: click.Context, file: str, history: bool, as_events: bool) -> None:
    """Parse a desktop cache.db."""
    parsed = _guarded(lambda: parse_cachedb(Path(file)))
    warnings: List[str] = list(parsed.warnings)
    joined = join_sync_history(parsed, warnings)
    if _wants_history(ctx, history, as_events):
        _emit_records(ctx, [row.as_dict() for row in joined.rows], warnings, SYNC_HISTORY_HEADERS)
        return
    _emit_events(ctx, events_from_cachedb(joined.rows, parsed.accounts, parsed.source), warnings)


@cli.command("parse-dbsdb")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--history", is_flag=True, help="Emit the joined file view rows (default for csv).")
@click.option("--events", "as_events", is_flag=True, help="Emit timeline events even for csv.")
@click.pass_context
def parse_dbsdb_cmd(ctx: click.Context, file: str, history: bool, as_events: bool) -> None:
    """Parse an Android db.sdb."""
    parsed = _guarded(lambda: parse_dbsdb(Path(file)))
    warnings: List[str] = list(parsed.warnings)
    joined = join_file_view_history(parsed, warnings)
    if _wants_history(ctx, history, as_events):
        _emit_records(ctx, [row.as_dict() for row in joined.rows], warnings, FILE_VIEW_HEADERS)
        return
    _emit_events(ctx, events_from_dbsdb(joined.rows, parsed.source), warnings)


@cli.command("parse-nsurlcache")
@click.argument("file", type=click.Path(dir_okay=False))
@click.pass_context
def parse_nsurlcache_cmd(ctx: click.Context, file: str) -> None:
    """Parse an iOS nsurlcache Cache.db."""
    warnings: List[str] = []
    responses = _guarded(lambda: parse_nsurlcache(Path(file), warnings))
    source = EvidenceRef(path=file, artefact_class=ArtefactClass.DATABASE)
    _emit_events(ctx, events_from_nsurlcache(responses, source), warnings)


@cli.command("parse-logs")
@click.argument("path", type=click.Path())
@click.pass_context
def parse_logs_cmd(ctx: click.Context, path: str) -> None:
    """Parse a daily log file or a logs directory."""
    warnings: List[str] = []
    target = Path(path)
    if target.is_dir():
        parsed = _guarded(lambda: parse_log_dir(target, warnings))
    else:
        parsed = [(target, _guarded(lambda: parse_log_file(target)))]
    events: List[ForensicEvent] = []
    for file, log_events in parsed:
        source = EvidenceRef(path=str(file), artefact_class=ArtefactClass.LOG)
        events.extend(events_from_log(log_events, source))
    _emit_events(ctx, events, warnings)


@cli.command("classify-urls")
@click.argument("file", type=click.Path(dir_okay=False))
@click.pass_context
def classify_urls_cmd(ctx: click.Context, file: str) -> None:
    """Classify the URLs of a browser history (text/CSV list, Chrome or Firefox store)."""
    warnings: List[str] = []
    visits = _guarded(lambda: read_history_file(Path(file), warnings))
    _emit_records(ctx, classify_visits(visits), warnings)


@cli.command("parse-webcache")
@click.argument("directory", type=click.Path(file_okay=False))
@click.pass_context
def parse_webcache_cmd(ctx: click.Context, directory: str) -> None:
    """Harvest a rebuilt www.cloudme.com/v1 web-cache tree."""
    workers = int(ctx.obj["config"]["case"]["workers"])
    harvest = _guarded(lambda: harvest_cache_dir(Path(directory), workers=workers))
    _emit_events(ctx, events_from_harvest(harvest), harvest.warnings)


@cli.command("parse-config")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option(
    "--kind",
    type=click.Choice(["auto"] + [k.value for k in ConfigKind]),
    default="auto",
    show_default=True,
)
@click.pass_context
def parse_config_cmd(ctx: click.Context, file: str, kind: str) -> None:
    """Parse a .reg export, Sync.conf, plist or user_data.xml."""
    warnings: List[str] = []
    config_kind = None if kind == "auto" else ConfigKind(kind)
    facts = _guarded(lambda: parse_config_file(Path(file), config_kind, warnings))
    _emit_events(ctx, events_from_identity(facts), warnings)


@cli.command()
@click.argument("dump", type=click.Path(dir_okay=False))
@click.option("--anchor", "anchors", multiple=True, required=True, help="Known string, e.g. a username.")
@click.option("--template", "template_name", default="user_table", show_default=True)
@click.option("--backward-bound", type=int, help="Bytes searched before each anchor.")
@click.option("--min-confidence", type=float, help="Minimum share of type-matching fields.")
@click.option("--records", "raw_records", is_flag=True, help="Emit decoded records instead of events.")
@click.pass_context
def carve(
    ctx: click.Context,
    dump: str,
    anchors: Sequence[str],
    template_name: str,
    backward_bound: Optional[int],
    min_confidence: Optional[float],
    raw_records: bool,
) -> None:
    """Recover SQLite records around anchor strings in a memory dump."""
    settings = ctx.obj["config"]["carver"]
    template = _guarded(lambda: resolve_template(template_name))
    bound = backward_bound if backward_bound is not None else int(settings["backward_bound"])
    confidence = min_confidence if min_confidence is not None else float(settings["min_confidence"])

    records = []
    for anchor in anchors:
        records.extend(
            _guarded(lambda: carve_file(Path(dump), anchor, template, bound, confidence))
        )
    if raw_records:
        rows = [
            {
                "template": r.template,
                "offset": r.offset,
                "rowid": r.rowid,
                "confidence": r.confidence,
                "values": [v.hex() if isinstance(v, bytes) else v for v in r.values()],
            }
            for r in records
        ]
        _emit_records(ctx, rows, [])
        return
    _emit_events(ctx, events_from_carved(records, dump), [])


@cli.command()
@click.argument("dump", type=click.Path(dir_okay=False))
@click.argument("terms", nargs=-1, required=True)
@click.option("--ignore-case", is_flag=True)
@click.option("--context", "context_window", type=int, help="Bytes of context on each side.")
@click.pass_context
def keywords(
    ctx: click.Context,
    dump: str,
    terms: Sequence[str],
    ignore_case: bool,
    context_window: Optional[int],
) -> None:
    """Find ASCII and UTF-16LE occurrences of terms in a dump."""
    settings = ctx.obj["config"]["carver"]
    hits = _guarded(
        lambda: scan_keywords(
            Path(dump),
            list(terms),
            case_insensitive=ignore_case,
            context=context_window if context_window is not None else int(settings["context_window"]),
            chunk_size=int(settings["chunk_size"]),
            progress=ctx.obj["progress"],
        )
    )
    records = [
        {
            "term": hit.term,
            "offset": hit.offset,
            "encoding": hit.encoding.value,
            "context": hit.context.hex(),
        }
        for hit in hits
    ]
    _emit_records(ctx, records, [])


@cli.command()
@click.argument("root", type=click.Path(file_okay=False))
@click.option("--profile", "profile_names", multiple=True, type=click.Choice(PROFILE_CHOICES))
@click.option("--dump", "dumps", multiple=True, type=click.Path(dir_okay=False), help="Memory dump to carve.")
@click.option("--anchor", "anchors", multiple=True, help="Extra carving anchor.")
@click.option("--downloads", "download_keywords", multiple=True, help="Download-folder keyword.")
@click.option("--history", "history_files", multiple=True, type=click.Path(dir_okay=False), help="Browser history file.")
@click.pass_context
def case(
    ctx: click.Context,
    root: str,
    profile_names: Sequence[str],
    dumps: Sequence[str],
    anchors: Sequence[str],
    download_keywords: Sequence[str],
    history_files: Sequence[str],
) -> None:
    """Run every extractor over an evidence root and emit the case report."""
    config = ctx.obj["config"]
    options = CaseOptions(
        profiles=tuple(_profiles(ctx, profile_names)),
        reveal_secrets=ctx.obj["reveal_secrets"],
        timestamp=ctx.obj["timestamp"],
        workers=int(config["case"]["workers"]),
        dumps=tuple(dumps),
        anchors=tuple(anchors),
        download_keywords=tuple(download_keywords),
        history_files=tuple(history_files),
        backward_bound=int(config["carver"]["backward_bound"]),
        min_confidence=float(config["carver"]["min_confidence"]),
    )
    report = _guarded(lambda: run_case(Path(root), options))
    _write(ctx, emit_report(report, ctx.obj["format"]))
    ctx.exit(report.exit_code)
