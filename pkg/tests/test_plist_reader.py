import plistlib
import random
import struct
from datetime import datetime

import pytest
import pytz

from cloudme_scope.exceptions import NotPlist, TruncatedPlist, UnsupportedObjectType
from cloudme_scope.utils.plist_reader import PlistUID, read_plist_bytes

ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.<>&\"'é☃𝄞"


def _text(rng):
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, 20)))


def _leaf(rng):
    choice = rng.randrange(7)
    if choice == 0:
        return _text(rng)
    if choice == 1:
        return rng.randint(-(2**62), 2**62)
    if choice == 2:
        return rng.uniform(-1e9, 1e9)
    if choice == 3:
        return rng.random() < 0.5
    if choice == 4:
        return bytes(rng.randrange(256) for _ in range(rng.randint(0, 32)))
    if choice == 5:
        return datetime(
            rng.randint(1990, 2030),
            rng.randint(1, 12),
            rng.randint(1, 28),
            rng.randint(0, 23),
            rng.randint(0, 59),
            rng.randint(0, 59),
        )
    return rng.randint(0, 255)


def _tree(rng, depth=0):
    if depth >= 3 or rng.random() < 0.3:
        return _leaf(rng)
    if rng.random() < 0.5:
        return [_tree(rng, depth + 1) for _ in range(rng.randint(0, 5))]
    return {_text(rng): _tree(rng, depth + 1) for _ in range(rng.randint(0, 5))}


def _as_utc(tree):
    """plistlib writes naive datetimes; the reader returns aware UTC ones."""
    if isinstance(tree, dict):
        return {k: _as_utc(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_as_utc(v) for v in tree]
    if isinstance(tree, datetime):
        return pytz.UTC.localize(tree)
    return tree


def test_binary_and_xml_give_the_same_tree():
    rng = random.Random(1458052107)
    for _ in range(25):
        tree = {"root": _tree(rng)}
        binary = read_plist_bytes(plistlib.dumps(tree, fmt=plistlib.FMT_BINARY))
        xml = read_plist_bytes(plistlib.dumps(tree, fmt=plistlib.FMT_XML))
        assert binary == xml == _as_utc(tree)


def test_known_preferences():
    tree = {
        "username": "adamthomson",
        "password": "digitalevidence",
        "adamthomson_LastUploadTime": datetime(2016, 3, 15, 14, 28, 27),
        "uploads": [1, 300, 70000, 2**40],
        "ratio": 0.5,
    }
    decoded = read_plist_bytes(plistlib.dumps(tree, fmt=plistlib.FMT_BINARY))

    assert decoded["adamthomson_LastUploadTime"] == datetime(2016, 3, 15, 14, 28, 27, tzinfo=pytz.UTC)
    assert decoded["uploads"] == [1, 300, 70000, 2**40]
    assert decoded["ratio"] == 0.5


def test_negative_integers():
    decoded = read_plist_bytes(plistlib.dumps({"n": -5, "m": -(2**40)}, fmt=plistlib.FMT_BINARY))
    assert decoded == {"n": -5, "m": -(2**40)}


def test_uid():
    decoded = read_plist_bytes(plistlib.dumps({"ref": plistlib.UID(5)}, fmt=plistlib.FMT_BINARY))
    assert isinstance(decoded["ref"], PlistUID)
    assert decoded["ref"] == 5


def test_not_a_plist():
    with pytest.raises(NotPlist):
        read_plist_bytes(b"")
    with pytest.raises(NotPlist):
        read_plist_bytes(b"hello world")
    with pytest.raises(NotPlist):
        read_plist_bytes(b'<?xml version="1.0"?><plist><dict><key>a</key></dict></plist>')


def test_truncated_binary():
    with pytest.raises(TruncatedPlist):
        read_plist_bytes(b"bplist00" + b"\x00" * 10)

    data = bytearray(plistlib.dumps({"a": 1}, fmt=plistlib.FMT_BINARY))
    data[-8:] = (2**40).to_bytes(8, "big")
    with pytest.raises(TruncatedPlist):
        read_plist_bytes(bytes(data))


def test_unknown_marker():
    # one object, marker 0xE0, then a one-entry offset table and the trailer
    data = b"bplist00" + b"\xe0" + b"\x08" + struct.pack(">6xBBQQQ", 1, 1, 1, 0, 9)
    with pytest.raises(UnsupportedObjectType):
        read_plist_bytes(data)
