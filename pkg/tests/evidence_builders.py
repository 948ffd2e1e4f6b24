"""
Builders for synthetic CloudMe evidence

Databases and documents mirror what the clients leave on disk; values follow
a case with one owner ("adamthomson") syncing from Windows, Mac OS, Ubuntu,
iOS and Android devices.
"""

import hashlib
import sqlite3
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

OWNER = "adamthomson"
USER_ID = 12886417622
DEVICE_NAME = "WIN-KMM6MUN4701"
ACCOUNT_CREATED = "2016-03-15 13:48:10"

SYNC_FOLDER_ID = 562958569596136
SYNC_FOLDER_NAME = "MacSyncFolder"
SYNC_FOLDER_PATH = "C:/Users/anonymous/Documents/MacSyncFolder"
SYNC_FOLDER_CREATED = "2016-03-15 22:06:55"
SYNC_FOLDER_LAST_RUN = "2016-03-16 04:41:40"

# (document_id, name, size, modified_date)
SYNC_DOCUMENTS: Tuple[Tuple[int, str, int, str], ...] = (
    (4457417804, "Enron3111.jpg", 287937, "2016-03-16 12:25:07"),
    (4457417805, "Enron3111.pdf", 31747, "2016-03-16 12:25:10"),
    (4457417806, "Enron3111.rtf", 43360, "2016-03-16 12:25:13"),
    (4457417807, "Enron3111.txt", 2734, "2016-03-16 12:25:13"),
    (4457417808, "Enron3111.zip", 30967, "2016-03-16 12:25:20"),
)

CACHEDB_SCHEMA = """
CREATE TABLE user_table (
    user_id INTEGER PRIMARY KEY,
    username TEXT,
    devicename TEXT,
    created TEXT
);
CREATE TABLE syncfolder_table (
    owner INTEGER,
    name TEXT,
    local_path TEXT,
    cloud_path TEXT,
    folder_id INTEGER,
    created TEXT,
    last_run TEXT,
    inactivated TEXT,
    encrypted TEXT
);
CREATE TABLE syncfolder_folder_table (
    name TEXT,
    root_folder_id INTEGER,
    folder_id INTEGER,
    child_folder_id INTEGER,
    creation_date TEXT,
    deleted TEXT,
    owner INTEGER
);
CREATE TABLE syncfolder_document_table (
    owner INTEGER,
    name TEXT,
    root_folder_id INTEGER,
    folder_id INTEGER,
    document_id INTEGER,
    size INTEGER,
    modified_date TEXT,
    checksum TEXT,
    main_checksum TEXT
);
"""


def md5_hex(text: str) -> str:
    return hashlib.md5(text.encode("utf-8")).hexdigest()


def build_cachedb(
    path: Path,
    documents: Sequence[Tuple[int, str, int, str]] = SYNC_DOCUMENTS,
    deleted: Optional[str] = None,
    inactivated: str = "false",
    skip_tables: Iterable[str] = (),
) -> Path:
    """A desktop cache.db holding one account, one sync folder and its files."""
    skip = set(skip_tables)
    connection = sqlite3.connect(path)
    try:
        for statement in CACHEDB_SCHEMA.split(";"):
            statement = statement.strip()
            if not statement:
                continue
            table = statement.split()[2]
            if table not in skip:
                connection.execute(statement)
        if "user_table" not in skip:
            connection.execute(
                "INSERT INTO user_table VALUES (?, ?, ?, ?)",
                (USER_ID, OWNER, DEVICE_NAME, ACCOUNT_CREATED),
            )
        if "syncfolder_table" not in skip:
            connection.execute(
                "INSERT INTO syncfolder_table VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    USER_ID,
                    SYNC_FOLDER_NAME,
                    SYNC_FOLDER_PATH,
                    "xios://Documents/CloudMe/MacSyncFolder",
                    SYNC_FOLDER_ID,
                    SYNC_FOLDER_CREATED,
                    SYNC_FOLDER_LAST_RUN,
                    inactivated,
                    "false",
                ),
            )
        if "syncfolder_folder_table" not in skip:
            connection.execute(
                "INSERT INTO syncfolder_folder_table VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    SYNC_FOLDER_NAME,
                    SYNC_FOLDER_ID,
                    SYNC_FOLDER_ID,
                    SYNC_FOLDER_ID,
                    SYNC_FOLDER_CREATED,
                    deleted,
                    USER_ID,
                ),
            )
        if "syncfolder_document_table" not in skip:
            connection.executemany(
                "INSERT INTO syncfolder_document_table VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                [
                    (
                        USER_ID,
                        name,
                        SYNC_FOLDER_ID,
                        SYNC_FOLDER_ID,
                        document_id,
                        size,
                        modified,
                        md5_hex(name),
                        None,
                    )
                    for document_id, name, size, modified in documents
                ],
            )
        connection.commit()
    finally:
        connection.close()
    return path


ANDROID_FOLDER_PATH = "xios://Documents/CloudMe/AndroidSyncFolder/"
INVESTIGATION_FOLDER_PATH = "xios://Documents/CloudMe/cloudme_investigation/"

# (name, folder_id, size, href, published, updated, mime)
MOBILE_FILES: Tuple[Tuple[str, int, int, str, str, str, str], ...] = (
    (
        "Enron3111.jpg",
        562958569596145,
        689402,
        "https://os.cloudme.com/v1/documents/562958569596145/4457368187/1",
        "2016-03-15T14:28:27Z",
        "2016-03-15T14:28:35Z",
        "image/jpeg",
    ),
    (
        "Enron3111.docx",
        562958569596145,
        16342,
        "https://os.cloudme.com/v1/documents/562958569596145/4457368325/1",
        "2016-03-15T14:29:24Z",
        "2016-03-15T14:29:24Z",
        "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
    ),
    (
        "cloudme_investigation.zip",
        562958569603280,
        8939743,
        "https://os.cloudme.com/v1/documents/562958569603280/4457426501/1",
        "2016-03-16T11:53:52Z",
        "2016-03-16T11:53:52Z",
        "application/zip",
    ),
)

# (folder_id, name, path)
MOBILE_FOLDERS: Tuple[Tuple[int, str, str], ...] = (
    (562958569596145, "AndroidSyncFolder", ANDROID_FOLDER_PATH),
    (562958569603280, "cloudme_investigation", INVESTIGATION_FOLDER_PATH),
)


def build_dbsdb(
    path: Path,
    files: Sequence[Tuple[str, int, int, str, str, str, str]] = MOBILE_FILES,
    folders: Sequence[Tuple[int, str, str]] = MOBILE_FOLDERS,
) -> Path:
    """An Android db.sdb with the 'files' and 'folders' tables."""
    connection = sqlite3.connect(path)
    try:
        connection.execute(
            "CREATE TABLE files (_id INTEGER PRIMARY KEY, name TEXT, folder_id INTEGER, "
            "size INTEGER, href TEXT, published TEXT, updated TEXT, owner TEXT, mime TEXT)"
        )
        connection.execute(
            "CREATE TABLE folders (_id INTEGER PRIMARY KEY, folder_id INTEGER, name TEXT, "
            "owner TEXT, parent TEXT, is_root INTEGER, path TEXT)"
        )
        connection.executemany(
            "INSERT INTO files (name, folder_id, size, href, published, updated, owner, mime) "
            "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
            [(n, f, s, h, p, u, OWNER, m) for n, f, s, h, p, u, m in files],
        )
        connection.executemany(
            "INSERT INTO folders (folder_id, name, owner, parent, is_root, path) "
            "VALUES (?, ?, ?, NULL, 0, ?)",
            [(f, n, OWNER, p) for f, n, p in folders],
        )
        connection.commit()
    finally:
        connection.close()
    return path


def build_nsurlcache(path: Path, entries: Sequence[Tuple[str, bytes, str]]) -> Path:
    """An iOS nsurlcache Cache.db from (request URL, body, time_stamp) triples."""
    connection = sqlite3.connect(path)
    try:
        connection.execute(
            "CREATE TABLE cfurl_cache_response (entry_ID INTEGER PRIMARY KEY, "
            "version INTEGER, hash_value INTEGER, storage_policy INTEGER, "
            "request_key TEXT UNIQUE, time_stamp TEXT, partition TEXT)"
        )
        connection.execute(
            "CREATE TABLE cfurl_cache_receiver_data (entry_ID INTEGER PRIMARY KEY, "
            "isDataOnFS INTEGER, receiver_data BLOB)"
        )
        for entry_id, (url, body, stamp) in enumerate(entries, start=1):
            connection.execute(
                "INSERT INTO cfurl_cache_response VALUES (?, 0, 0, 0, ?, ?, NULL)",
                (entry_id, url, stamp),
            )
            connection.execute(
                "INSERT INTO cfurl_cache_receiver_data VALUES (?, 0, ?)", (entry_id, body)
            )
        connection.commit()
    finally:
        connection.close()
    return path


WEBSHARES_XML = b"""<?xml version="1.0"?>
<webshares xmlns:os="http://a9.com/-/spec/opensearch/1.1/">
  <os:totalResults>6</os:totalResults>
  <os:startIndex>0</os:startIndex>
  <os:itemsPerPage>1000</os:itemsPerPage>
  <webshare createdState="existing" updated="2016-03-16T04:41:12Z" created="2016-03-16T04:41:12Z" access="update" type="cloudme" password="digitalevidence" visibility="private"
  description="" name="CloudMe" userId="12886417622" id="718585">
    <folder name="CloudMe" id="562958569591836"/>
  </webshare>
  <webshare createdState="existing" updated="2016-03-15T14:36:03Z" created="2016-03-15T14:36:03Z" access="update" type="" password="Digitalevidence" visibility="private"
  description="" name="IosSubFolder" userId="12886417622" id="718531">
  </webshare>
  <webshare createdState="existing" updated="2016-03-16T04:12:37Z" created="2016-03-16T04:12:37Z" access="update" type="" password="Digitalevidence" visibility="private"
  description="" name="IOSSyncFolder" userId="12886417622" id="718584">
  </webshare>
  <webshare createdState="existing" updated="2016-03-15T14:45:44Z" created="2016-03-15T14:45:44Z" access="read" type="cloudme" password="digitalevidence" visibility="private"
  description="foldersharingfromMacOS" name="MacSyncFolder" userId="12886417622" id="718534">
  </webshare>
  <webshare createdState="existing" updated="2016-03-15T14:42:39Z" created="2016-03-15T14:42:39Z" access="read" type="cloudme" password="digitalevidence" visibility="private"
  description="" name="UbuntuSyncFolder" userId="12886417622" id="718533">
  </webshare>
  <webshare createdState="existing" updated="2016-03-15T14:31:13Z" created="2016-03-15T14:31:13Z" access="read" type="cloudme" password="" visibility="private" description=""
  name="WindowsSyncFolder" userId="12886417622" id="718530">
  </webshare>
</webshares>
"""

FAVORITES_XML = b"""<?xml version="1.0"?>
<favorites xmlns:os="http://a9.com/-/spec/opensearch/1.1/">
  <os:totalResults>3</os:totalResults>
  <os:startIndex>0</os:startIndex>
  <os:itemsPerPage>1000</os:itemsPerPage>
  <favorite document_id="0" folder_id="562958569591836" access="update" description="" password="digitalevidence" name="CloudMe" created="2016-03-16T04:41:34Z"
  webShareId="718585" sharingUserName="adamthomson" sharingUserId="12886417622" userId="12886417622" id="112118"/>
  <favorite document_id="0" folder_id="562958569596136" description="foldersharingfromMacOS" password="digitalevidence" name="MacSyncFolder" created="2016-03-17T04:57:49Z"
  webShareId="718534" sharingUserName="adamthomson" sharingUserId="12886417622" userId="12886417622" id="112124"/>
  <favorite document_id="0" folder_id="562958569596139" description="" password="digitalevidence" name="UbuntuSyncFolder" created="2016-03-15T14:43:17Z" webShareId="718533"
  sharingUserName="adamthomson" sharingUserId="12886417622" userId="12886417622" id="112112"/>
</favorites>
"""

DEVICE_SYNC_XML = b"""<sync version="1.9.6" dName="WIN-KMM6MUN4701" clientId="{1cb0b304-6387-4813-88a8-1a2425fble06}">
  <syncfolder name="CloudMe" path="C:/Users/anonymous/Documents/CloudMe" hasSynchronized="true" upload="true" download="true"
  hotsync="true" cloudmeFolder="true" favoriteFolder="false" conflict="backup" cloudPath="xios://Documents/CloudMe" folderId="562958569591836"
  folderSyncMode="1" folderMode="2" foldertype="1" inactivated="false" lastSync="2016-03-15 12:47:25" />
</sync>
"""

FOLDER_LISTING_XML = b"""<fs:folder id='562958569591836' xmlns:xlink='http://www.w3.org/1999/xlink' xmlns:fs='http://xcerion.com/folders.xsd'>
  <fs:folder id='562958569603280' name='cloudme investigation'>
    <fs:tag type='update' value='718585' group='webshare' propagated='true' />
  </fs:folder>
</fs:folder>
"""

LIFESTREAM_XML = b"""<?xml version="1.0"?>
<lifestream>
  <event senderId="12886417622" senderGroupId="12886417623" senderName="adamthomson"
    receiverId="12886417700" receiverGroupId="12886417701" receiverName="suspect"
    parentFolder="562958569591836" seen="false" favoriteId="112118"
    created="2016-03-16T04:41:34Z"/>
</lifestream>
"""

LOGIN_LINE = '2016-03-15 13:48:22: Logged in as: "adamthomson"'
DOWNLOAD_ERROR_LINE = (
    '2016-03-15 14:52:02: CloudMeUnthreaded: Request error: '
    '"/Users/alice/Documents/UbuntuShareFolder/UbuntuSubFolder/UbuntuSubFolder/Enron3111.docx" | '
    '"Error downloading https://os.cloudme.com/v1/users/12886417622/favorites/112112/webshare/'
    'UbuntuSubFolder/UbuntuSubFolder/Enron3111.docx - server replied: Not Found" Error number: 203'
)
SYNC_FAILED_LINE = (
    '2016-03-15 14:56:30: onSyncRequestFailed: "WindowsSubFolder/WindowsSubFolder/Enron3111.pdf"'
    ' | Type: "Uploading" | Error: "7"'
)
SYNC_NOT_FOUND_LINE = (
    '2016-03-15 14:56:30: SYNC_FILE_NOT_FOUND SYNC_FOLDER_NOT_FOUND: (0) '
    '"WindowsSubFolder/WindowsSubFolder/Enron3111.pdf" :?'
)
LOCAL_FOLDER_LINE = (
    '2016-03-15 14:51:52: addRemoveLocalFolder:Fail: "/home/suspectpc/UbuntuSyncFolder/UbuntuSubFolder"'
)

DAILY_LOG = "\n".join(
    [LOGIN_LINE, LOCAL_FOLDER_LINE, DOWNLOAD_ERROR_LINE, SYNC_FAILED_LINE, SYNC_NOT_FOUND_LINE]
) + "\n"

REG_EXPORT = (
    "Windows Registry Editor Version 5.00\r\n"
    "\r\n"
    "[HKEY_USERS\\S-1-5-21-1004336348-1177238915-682003330-1000\\Software\\CloudMe\\Sync]\r\n"
    '"adamthomson_xClientId"="{1cb0b304-6387-4813-88a8-1a2425fble06}"\r\n'
    "\r\n"
    "[HKEY_USERS\\S-1-5-21-1004336348-1177238915-682003330-1000\\Software\\CloudMe\\Sync\\startup]\r\n"
    '"me"="adamthomson"\r\n'
    "\r\n"
    "[HKEY_USERS\\S-1-5-21-1004336348-1177238915-682003330-1000\\Software\\Microsoft\\Notepad]\r\n"
    '"me"="not-cloudme"\r\n'
)


def reg_export_bytes(text: str = REG_EXPORT) -> bytes:
    """regedit writes exports as UTF-16LE with a byte-order mark."""
    return b"\xff\xfe" + text.encode("utf-16-le")


SYNC_CONF = """[startup]
me=adamthomson

[adamthomson]
_xClientId=2c3e5a0b9f6d4e1a8b7c6d5e4f3a2b1c
"""

USER_DATA_XML = b"""<?xml version='1.0' encoding='utf-8' standalone='yes' ?>
<map>
    <string name="username">adamthomson</string>
    <string name="password">digitalevidence</string>
    <boolean name="autoupload" value="true" />
    <int name="lastVersion" value="42" />
</map>
"""


def build_windows_evidence(root: Path) -> Path:
    """A Windows user profile holding the desktop client's artefacts."""
    profile = root / "Users" / "anonymous"
    cloudme = profile / "AppData" / "Local" / "CloudMe"
    logs = cloudme / "logs"
    logs.mkdir(parents=True)
    build_cachedb(cloudme / "cache.db")
    (logs / "2016-03-15.txt").write_text(DAILY_LOG, encoding="utf-8")
    (root / "registry_export.reg").write_bytes(reg_export_bytes())

    downloads = profile / "Documents"
    downloads.mkdir(parents=True)
    (downloads / "Enron3111.pdf").write_bytes(b"%PDF-1.4")
    (downloads / "notes.txt").write_bytes(b"notes")
    return root


def build_chrome_history(path: Path, visits: Sequence[Tuple[str, int]]) -> Path:
    """Chrome ``History``: one urls row and one visit (WebKit micros) per entry."""
    connection = sqlite3.connect(path)
    try:
        connection.execute("CREATE TABLE urls (id INTEGER PRIMARY KEY, url TEXT, title TEXT)")
        connection.execute(
            "CREATE TABLE visits (id INTEGER PRIMARY KEY, url INTEGER, visit_time INTEGER)"
        )
        for row_id, (url, visit_time) in enumerate(visits, start=1):
            connection.execute("INSERT INTO urls VALUES (?, ?, NULL)", (row_id, url))
            connection.execute("INSERT INTO visits VALUES (?, ?, ?)", (row_id, row_id, visit_time))
        connection.commit()
    finally:
        connection.close()
    return path
