import sqlite3
from collections import Counter

import pytest

from cloudme_scope.exceptions import SchemaMismatch
from cloudme_scope.mobile_store_service import (
    FILE_VIEW_HEADERS,
    FILE_VIEW_SQL,
    NSURLCACHE_SQL,
    events_from_dbsdb,
    events_from_nsurlcache,
    join_file_view_history,
    parse_dbsdb,
    parse_nsurlcache,
)
from cloudme_scope.models import EventKind
from cloudme_scope.webtrace_service import DocumentKind
from evidence_builders import (
    ANDROID_FOLDER_PATH,
    FAVORITES_XML,
    MOBILE_FILES,
    OWNER,
    WEBSHARES_XML,
    build_dbsdb,
    build_nsurlcache,
)


def _oracle(path, sql):
    connection = sqlite3.connect(path)
    try:
        rows = connection.execute(sql).fetchall()
    finally:
        connection.close()
    return rows


class TestDbSdb:
    def test_parse(self, dbsdb):
        parsed = parse_dbsdb(dbsdb)

        assert parsed.warnings == ()
        assert [f.name for f in parsed.files] == [f[0] for f in MOBILE_FILES]
        assert parsed.files[0].size == 689402
        assert parsed.files[0].updated.isoformat() == "2016-03-15T14:28:35Z"
        assert [f.path for f in parsed.folders][0] == ANDROID_FOLDER_PATH

    def test_file_view_history_matches_the_sql_join(self, dbsdb):
        joined = join_file_view_history(parse_dbsdb(dbsdb))
        expected = Counter(
            tuple("" if v is None else str(v) for v in row) for row in _oracle(dbsdb, FILE_VIEW_SQL)
        )

        assert joined.dropped == 0
        assert Counter(row.as_row() for row in joined.rows) == expected

    def test_investigation_archive_row(self, dbsdb):
        joined = join_file_view_history(parse_dbsdb(dbsdb))
        row = [r.as_dict() for r in joined.rows if r.filename == "cloudme_investigation.zip"][0]

        assert list(row) == list(FILE_VIEW_HEADERS)
        assert row["File Size"] == "8939743"
        assert row["Folder Name"] == "cloudme_investigation"
        assert row["URL"] == "https://os.cloudme.com/v1/documents/562958569603280/4457426501/1"
        assert row["Origin"] == "xios://Documents/CloudMe/cloudme_investigation/"

    def test_events(self, dbsdb):
        parsed = parse_dbsdb(dbsdb)
        events = events_from_dbsdb(join_file_view_history(parsed).rows, parsed.source)

        assert len(events) == 3
        assert {e.kind for e in events} == {EventKind.FILE_VIEWED}
        first = events[0]
        assert first.actor == OWNER
        assert first.object == ANDROID_FOLDER_PATH + "Enron3111.jpg"
        assert first.time.isoformat() == "2016-03-15T14:28:35Z"
        assert first.attribute("mime") == "image/jpeg"

    def test_unexpected_href_and_path_warn(self, tmp_path):
        files = [("odd.txt", 7, 1, "https://example.com/odd.txt", "", "", "text/plain")]
        folders = [(7, "Odd", "/sdcard/Odd/")]
        parsed = parse_dbsdb(build_dbsdb(tmp_path / "db.sdb", files=files, folders=folders))

        assert len(parsed.warnings) == 2
        assert parsed.files[0].published is None

    def test_orphan_file_is_dropped(self, tmp_path):
        files = list(MOBILE_FILES) + [
            (
                "lost.txt",
                1,
                5,
                "https://os.cloudme.com/v1/documents/1/2/1",
                "2016-03-15T14:00:00Z",
                "2016-03-15T14:00:00Z",
                "text/plain",
            )
        ]
        warnings = []
        parsed = parse_dbsdb(build_dbsdb(tmp_path / "db.sdb", files=files))
        joined = join_file_view_history(parsed, warnings)

        assert joined.dropped == 1
        assert warnings == ["file view join dropped 1 files with no matching folder"]
        assert len(joined.rows) == 3


class TestNsUrlCache:
    def _cache(self, tmp_path):
        return build_nsurlcache(
            tmp_path / "Cache.db",
            [
                (
                    "https://www.cloudme.com/v1/users/12886417622/webshares/order=name",
                    WEBSHARES_XML,
                    "2016-03-16 04:45:01",
                ),
                (
                    "https://www.cloudme.com/v1/users/12886417622/favorites/extended=true",
                    FAVORITES_XML,
                    "2016-03-17 05:00:12",
                ),
                ("https://www.cloudme.com/static/logo.png", b"\x89PNG\r\n", "2016-03-16 04:45:02"),
            ],
        )

    def test_pairs_bodies_with_requests(self, tmp_path):
        path = self._cache(tmp_path)
        responses = parse_nsurlcache(path)

        assert len(responses) == len(_oracle(path, NSURLCACHE_SQL)) == 3
        kinds = [r.document.kind if r.document else None for r in responses]
        assert kinds == [DocumentKind.WEBSHARES, DocumentKind.FAVORITES, None]
        assert responses[0].fetched.isoformat() == "2016-03-16T04:45:01Z"
        assert responses[2].body == b"\x89PNG\r\n"

    def test_events_carry_shares_and_favorites(self, tmp_path):
        events = events_from_nsurlcache(parse_nsurlcache(self._cache(tmp_path)))

        kinds = Counter(e.kind for e in events)
        assert kinds == {EventKind.SHARE_CREATED: 6, EventKind.WEB_SHARE_ACCESSED: 3}

    def test_numeric_time_stamp(self, tmp_path):
        path = build_nsurlcache(
            tmp_path / "Cache.db",
            [("https://www.cloudme.com/v1/x", b"<favorites/>", "1458052107")],
        )
        responses = parse_nsurlcache(path)

        assert responses[0].fetched.isoformat() == "2016-03-15T14:28:27Z"

    def test_foreign_database(self, dbsdb):
        with pytest.raises(SchemaMismatch):
            parse_nsurlcache(dbsdb)
