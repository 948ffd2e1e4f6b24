import orjson
import pytest

from cloudme_scope.exceptions import RootUnreadable
from cloudme_scope.locator_service import (
    PlatformOs,
    builtin_profiles,
    list_downloads,
    load_custom_profiles,
    match_pattern,
    scan_root,
    select_profiles,
)
from cloudme_scope.models import ArtefactClass


def _touch(root, relative, data=b"x"):
    path = root / relative
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


def test_windows_evidence_tree(windows_root):
    hits = scan_root(windows_root)

    assert [(h.profile, h.artefact_class) for h in hits] == [
        (PlatformOs.WINDOWS, ArtefactClass.DATABASE),
        (PlatformOs.WINDOWS, ArtefactClass.LOG),
        (PlatformOs.WINDOWS, ArtefactClass.CONFIG),
    ]
    assert hits[0].path.endswith("AppData/Local/CloudMe/cache.db")
    assert hits[1].path.endswith("CloudMe/logs")
    assert hits[2].path.endswith("registry_export.reg")


def test_every_platform(tmp_path):
    root = tmp_path / "image"
    _touch(root, "home/suspectpc/.local/share/CloudMe/cache.db")
    _touch(root, "home/suspectpc/.config/CloudMe/Sync.conf")
    _touch(root, "Users/alice/Library/Application Support/CloudMe/cache.db")
    _touch(root, "Users/alice/Library/Preferences/com.CloudMe.Sync.plist")
    _touch(
        root,
        "private/var/mobile/Applications/3F2504E0-4F89-11D3-9A0C-0305E82C3301/"
        "Library/Caches/com.xcerion.icloud.iphone/nsurlcache/Cache.db",
    )
    _touch(root, "sdcard/Android/data/com.xcerion.android/cache/db.sdb")
    _touch(root, "data/data/com.xcerion.android/shared_prefs/user_data.xml")

    found = {(h.profile, h.artefact_class) for h in scan_root(root)}

    assert found == {
        (PlatformOs.UBUNTU, ArtefactClass.DATABASE),
        (PlatformOs.UBUNTU, ArtefactClass.CONFIG),
        (PlatformOs.MACOS, ArtefactClass.DATABASE),
        (PlatformOs.MACOS, ArtefactClass.CONFIG),
        (PlatformOs.IOS, ArtefactClass.DATABASE),
        (PlatformOs.ANDROID, ArtefactClass.DATABASE),
        (PlatformOs.ANDROID, ArtefactClass.CONFIG),
    }


def test_android_app_data_directory(tmp_path):
    root = tmp_path / "image"
    (root / "data/data/com.xcerion.android/databases").mkdir(parents=True)
    (root / "data/data/com.excerion.android").mkdir(parents=True)

    hits = scan_root(root, select_profiles(["android"]))

    assert [(h.path.rsplit("/", 1)[-1], h.variant) for h in hits] == [
        ("com.excerion.android", "com.excerion.android"),
        ("com.xcerion.android", None),
    ]
    assert {h.artefact_class for h in hits} == {ArtefactClass.CONFIG}


def test_windows_rules_ignore_case(tmp_path):
    root = tmp_path / "image"
    _touch(root, "USERS/Anonymous/appdata/local/cloudme/CACHE.DB")
    _touch(root, "home/suspectpc/.local/share/cloudme/cache.db")

    hits = scan_root(root)

    assert [(h.profile, h.artefact_class) for h in hits] == [
        (PlatformOs.WINDOWS, ArtefactClass.DATABASE)
    ]


def test_variant_spellings(tmp_path):
    root = tmp_path / "image"
    _touch(root, "sdcard/Android/data/com.excerion.android/cache/db.sdb")
    _touch(root, "ABCD/Library/Preferences/com.xcursion.icloud.iphone.plist")

    variants = {(h.profile, h.variant) for h in scan_root(root)}

    assert variants == {
        (PlatformOs.ANDROID, "com.excerion.android"),
        (PlatformOs.IOS, "com.xcursion.icloud.iphone"),
    }


def test_symlinks_are_not_followed(tmp_path):
    root = tmp_path / "image"
    target = tmp_path / "elsewhere"
    _touch(target, "AppData/Local/CloudMe/cache.db")
    (root / "Users").mkdir(parents=True)
    (root / "Users" / "anonymous").symlink_to(target, target_is_directory=True)

    assert scan_root(root) == []


def test_scan_is_deterministic(windows_root):
    assert scan_root(windows_root, workers=1) == scan_root(windows_root, workers=8)


def test_missing_root(tmp_path):
    with pytest.raises(RootUnreadable):
        scan_root(tmp_path / "missing")


class TestMatchPattern:
    def test_tail_match(self):
        parts = ("mnt", "c", "Users", "anonymous", "AppData", "Local", "CloudMe", "cache.db")
        assert match_pattern("<User Profile>/AppData/Local/CloudMe/cache.db", parts, False, False)

    def test_directory_rule_needs_a_directory(self):
        parts = ("Users", "anonymous", "AppData", "Local", "CloudMe", "logs")
        pattern = "<User Profile>/AppData/Local/CloudMe/logs/"
        assert match_pattern(pattern, parts, True, False)
        assert not match_pattern(pattern, parts, False, False)

    def test_profile_token_skips_hidden_directories(self):
        parts = (".cache", "AppData", "Local", "CloudMe", "cache.db")
        assert not match_pattern("<User Profile>/AppData/Local/CloudMe/cache.db", parts, False, False)

    def test_backslash_patterns(self):
        parts = ("UUID", "Documents", "persistentCache")
        assert match_pattern("<UUID>\\Documents\\persistentCache\\", parts, True, True)


class TestDownloads:
    def test_documents_folder(self, windows_root):
        hits = list_downloads(windows_root, select_profiles(["win"]))

        assert [h.path.rsplit("/", 1)[-1] for h in hits] == ["Enron3111.pdf", "notes.txt"]
        assert all(h.keyword is None for h in hits)

    def test_keyword_filter(self, tmp_path):
        root = tmp_path / "image"
        downloads = "sdcard/Android/data/com.xcerion.android/cache/files/Downloads"
        _touch(root, f"{downloads}/Enron3111.docx")
        _touch(root, f"{downloads}/holiday.jpg")

        hits = list_downloads(root, select_profiles(["android"]), keywords=["enron"])

        assert len(hits) == 1
        assert hits[0].keyword == "enron"
        assert hits[0].profile == PlatformOs.ANDROID
        assert hits[0].directory.endswith("Downloads")


class TestProfiles:
    def test_builtin(self):
        assert [p.os for p in builtin_profiles()] == list(PlatformOs)

    def test_select(self):
        assert [p.os for p in select_profiles(["win", "ios"])] == [PlatformOs.WINDOWS, PlatformOs.IOS]
        assert len(select_profiles([])) == 5
        assert len(select_profiles(["all"])) == 5

    def test_unknown_profile(self):
        with pytest.raises(ValueError):
            select_profiles(["beos"])

    def test_custom_profiles(self, tmp_path):
        profile_dir = tmp_path / "profiles"
        profile_dir.mkdir()
        (profile_dir / "backup.json").write_bytes(
            orjson.dumps(
                {
                    "os": "Windows",
                    "rules": [
                        {"artefact_class": "Database", "pattern": "Backups\\*\\cache.db"}
                    ],
                }
            )
        )
        root = tmp_path / "image"
        _touch(root, "Backups/2016-03-16/cache.db")

        profiles = load_custom_profiles(profile_dir)
        assert profiles[0].rules[0].pattern == "Backups/*/cache.db"

        hits = scan_root(root, select_profiles(["ubuntu"], custom_dir=profile_dir))
        assert [(h.profile, h.rule) for h in hits] == [(PlatformOs.WINDOWS, "Backups/*/cache.db")]

    def test_invalid_custom_profile(self, tmp_path):
        (tmp_path / "bad.json").write_bytes(b'{"os": "Plan9", "rules": []}')
        with pytest.raises(ValueError):
            load_custom_profiles(tmp_path)
