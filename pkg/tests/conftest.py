import logging
from pathlib import Path

import pytest

from cloudme_scope.utils.config import reset_config
from evidence_builders import build_cachedb, build_dbsdb, build_windows_evidence


@pytest.fixture(autouse=True)
def _isolated_runtime(monkeypatch, tmp_path):
    """Fresh config per test and no stderr handler left behind by a CLI run."""
    monkeypatch.delenv("CLOUDME_SCOPE_CONFIG", raising=False)
    monkeypatch.delenv("CLOUDME_SCOPE_PROFILE_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    reset_config()
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if handler.get_name() == "cloudme-scope":
            root.removeHandler(handler)
    reset_config()


@pytest.fixture
def cachedb(tmp_path) -> Path:
    return build_cachedb(tmp_path / "cache.db")


@pytest.fixture
def dbsdb(tmp_path) -> Path:
    return build_dbsdb(tmp_path / "db.sdb")


@pytest.fixture
def windows_root(tmp_path) -> Path:
    return build_windows_evidence(tmp_path / "evidence")
