from collections import Counter

import pytest

from cloudme_scope.case_service import CaseOptions, run_case
from cloudme_scope.exceptions import RootUnreadable
from cloudme_scope.locator_service import select_profiles
from cloudme_scope.models import ArtefactClass, EventKind
from cloudme_scope.reporting import ReportFormat, emit_report
from evidence_builders import OWNER, USER_DATA_XML, USER_ID

FIXED_TIME = "2016-03-18 00:00:00"


def test_windows_case(windows_root):
    report = run_case(windows_root, CaseOptions(timestamp=FIXED_TIME))

    assert report.warnings == ()
    assert report.exit_code == 0
    assert len(report.hits) == 3
    assert len(report.events) == 14
    assert Counter(e.kind for e in report.events) == {
        EventKind.FILE_MODIFIED: 5,
        EventKind.SYNC_COMPLETED: 1,
        EventKind.FOLDER_CREATED: 1,
        EventKind.IDENTITY_FOUND: 3,
        EventKind.LOGIN: 1,
        EventKind.SYNC_FAILED: 3,
    }
    assert [a.username for a in report.accounts] == [OWNER]
    assert len(report.identities) == 2
    assert report.generated_at.isoformat() == "2016-03-18T00:00:00Z"


def test_timeline_is_ordered_with_undated_last(windows_root):
    events = run_case(windows_root, CaseOptions(timestamp=FIXED_TIME)).events

    dated = [e.time.instant for e in events if e.time is not None]
    assert dated == sorted(dated)
    first_undated = next(i for i, e in enumerate(events) if e.time is None)
    assert all(e.time is None for e in events[first_undated:])
    # account creation precedes the first logged login
    assert [e.kind for e in events[:2]] == [EventKind.IDENTITY_FOUND, EventKind.LOGIN]


def test_report_is_deterministic(windows_root):
    first = run_case(windows_root, CaseOptions(timestamp=FIXED_TIME))
    second = run_case(windows_root, CaseOptions(timestamp=FIXED_TIME))

    for fmt in ReportFormat:
        assert emit_report(first, fmt) == emit_report(second, fmt)

    serial = run_case(windows_root, CaseOptions(timestamp=FIXED_TIME, workers=1))
    assert serial.events == first.events


def test_downloads_are_listed(windows_root):
    report = run_case(windows_root, CaseOptions(download_keywords=("enron",)))

    assert [d.path.rsplit("/", 1)[-1] for d in report.downloads] == ["Enron3111.pdf"]


def test_corrupt_database_is_a_warning(windows_root):
    cache = windows_root / "Users" / "anonymous" / "AppData" / "Local" / "CloudMe" / "cache.db"
    cache.write_bytes(b"not a database")

    report = run_case(windows_root)

    assert len(report.warnings) == 1
    assert "cache.db" in report.warnings[0]
    assert report.exit_code == 1
    assert len(report.events) == 6


def test_empty_root(tmp_path):
    (tmp_path / "empty").mkdir()
    report = run_case(tmp_path / "empty")

    assert report.events == ()
    assert report.exit_code == 0


def test_missing_root(tmp_path):
    with pytest.raises(RootUnreadable):
        run_case(tmp_path / "missing")


def test_profile_selection(windows_root):
    report = run_case(windows_root, CaseOptions(profiles=tuple(select_profiles(["ubuntu"]))))

    assert report.hits == ()
    assert report.events == ()


def test_dump_carving_uses_discovered_usernames(windows_root, tmp_path):
    cache = windows_root / "Users" / "anonymous" / "AppData" / "Local" / "CloudMe" / "cache.db"
    dump = tmp_path / "memory.raw"
    dump.write_bytes(b"\x00" * 4096 + cache.read_bytes() + b"\x00" * 4096)

    report = run_case(windows_root, CaseOptions(dumps=(str(dump),)))

    carved = [e for e in report.events if e.source.artefact_class == ArtefactClass.MEMORY_DUMP]
    assert carved
    assert any(e.actor == OWNER and e.attribute("user_id") == str(USER_ID) for e in carved)
    assert all(e.source.offset is not None for e in carved)


def test_missing_dump_is_a_warning(windows_root, tmp_path):
    report = run_case(windows_root, CaseOptions(dumps=(str(tmp_path / "missing.raw"),)))

    assert len(report.warnings) == 1
    assert report.exit_code == 1


def test_extra_history_file(windows_root, tmp_path):
    history = tmp_path / "history.txt"
    history.write_text("https://www.cloudme.com/en?logout=1&r=1458192365602\n")

    report = run_case(windows_root, CaseOptions(history_files=(str(history),)))

    logout = [e for e in report.events if e.kind == EventKind.LOGOUT]
    assert len(logout) == 1
    assert logout[0].time.isoformat() == "2016-03-17T05:26:05.602Z"


def test_android_app_data_tree(tmp_path):
    prefs = tmp_path / "image" / "data" / "data" / "com.xcerion.android" / "shared_prefs"
    prefs.mkdir(parents=True)
    (prefs / "user_data.xml").write_bytes(USER_DATA_XML)

    report = run_case(tmp_path / "image", CaseOptions(profiles=tuple(select_profiles(["android"]))))

    assert [h.path.rsplit("/", 1)[-1] for h in report.hits] == [
        "com.xcerion.android",
        "user_data.xml",
    ]
    assert report.warnings == ()
    assert [i.username for i in report.identities] == [OWNER]
