"""
Errors
======

Every failure a parser can report. Input-shape errors also derive from
``ValueError`` so callers that only know the standard hierarchy still catch
them.
"""

from typing import Optional


class CloudMeScopeError(Exception):
    """Base class for all cloudme-scope errors"""


class UnparsableTimestamp(CloudMeScopeError, ValueError):
    def __init__(self, raw: str, hint: Optional[str] = None):
        self.raw = raw
        self.hint = hint
        suffix = f" as {hint}" if hint else ""
        super().__init__(f"cannot parse timestamp {raw!r}{suffix}")


class RootUnreadable(CloudMeScopeError, OSError):
    def __init__(self, root: str, reason: str = ""):
        self.root = root
        super().__init__(f"evidence root unreadable: {root} {reason}".rstrip())


class Unreadable(CloudMeScopeError, OSError):
    def __init__(self, path: str, reason: str = ""):
        self.path = path
        super().__init__(f"cannot read {path} {reason}".rstrip())


class NotSqlite(CloudMeScopeError, ValueError):
    def __init__(self, path: str, reason: str = ""):
        self.path = path
        super().__init__(f"not a SQLite database: {path} {reason}".rstrip())


class SchemaMismatch(CloudMeScopeError, ValueError):
    def __init__(self, table: str, column: str):
        self.table = table
        self.column = column
        super().__init__(f"table {table!r} lacks required column {column!r}")


class MalformedXml(CloudMeScopeError, ValueError):
    pass


class WrongDocType(CloudMeScopeError, ValueError):
    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(f"expected <{expected}> document, found <{found}>")


class RootNotFound(CloudMeScopeError, ValueError):
    pass


class NotRegExport(CloudMeScopeError, ValueError):
    pass


class NotPlist(CloudMeScopeError, ValueError):
    pass


class TruncatedPlist(CloudMeScopeError, ValueError):
    pass


class UnsupportedObjectType(CloudMeScopeError, ValueError):
    def __init__(self, code: int):
        self.code = code
        super().__init__(f"unsupported binary plist object type 0x{code:02x}")


class NoCredentialKeys(CloudMeScopeError, ValueError):
    pass


class Truncated(CloudMeScopeError, ValueError):
    pass


class MalformedHeader(CloudMeScopeError, ValueError):
    pass
