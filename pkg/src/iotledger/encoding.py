"""Deterministic encodings used for hashing, signing and on-disk records.

Canonical JSON: object keys sorted, no whitespace, ``bytes`` as standard
base64, integers as decimal strings.  Two structurally equal values always
produce the same byte string, so digests are reproducible.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from typing import Any

ZERO_DIGEST = "00" * 32


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    """Strict base64 decode: rejects non-alphabet characters and
    non-canonical padding bits."""
    if not isinstance(text, str):
        raise ValueError(f"expected base64 string, got {type(text).__name__}")
    try:
        raw = base64.b64decode(text, validate=True)
    except binascii.Error as exc:
        raise ValueError(f"bad base64: {exc}") from None
    if b64(raw) != text:
        raise ValueError("non-canonical base64")
    return raw


def as_int(value: Any) -> int:
    """Accept a native int or its canonical decimal-string form."""
    if isinstance(value, bool):
        raise ValueError("bool is not an integer field")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value and (value.isdigit() or (value[0] == "-" and value[1:].isdigit())):
        n = int(value)
        if str(n) != value:
            raise ValueError(f"non-canonical integer {value!r}")
        return n
    raise ValueError(f"expected integer, got {value!r}")


def as_bytes(value: Any) -> bytes:
    if isinstance(value, bytes):
        return value
    return unb64(value)


def jsonable(obj: Any, ints_as_str: bool = True) -> Any:
    """Convert nested dict/list/bytes/int values into JSON-ready values."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, int):
        return str(obj) if ints_as_str else obj
    if isinstance(obj, (bytes, bytearray)):
        return b64(bytes(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v, ints_as_str) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v, ints_as_str) for v in obj]
    raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical(obj: Any) -> bytes:
    return json.dumps(
        jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj: Any) -> str:
    """Lowercase hex SHA-256 of the canonical encoding of ``obj``."""
    return sha256_hex(canonical(obj))


def check_hex_digest(value: Any) -> str:
    if not isinstance(value, str) or len(value) != 64 or value.lower() != value:
        raise ValueError(f"expected lowercase 64-char hex digest, got {value!r}")
    bytes.fromhex(value)
    return value
