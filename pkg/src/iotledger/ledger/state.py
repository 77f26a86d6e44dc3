"""World-state backends.

``EmbeddedKV`` keeps a sorted key index next to a hash map, the way an
embedded LSM store iterates in key order.  ``DocumentStore`` keeps one
document per key and parses JSON values so that simple field-equality
selectors can run against them; non-JSON values are stored opaquely.

Both backends must answer ``get`` and ``range`` identically for the same
write history.
"""

from __future__ import annotations

import bisect
import enum
import json
from typing import Any, Iterator

from .block import Version

Entry = tuple[bytes, Version]


class Backend(str, enum.Enum):
    EMBEDDED_KV = "embedded-kv"
    DOCUMENT_STORE = "document-store"


class InvalidRange(ValueError):
    pass


def check_range(start: str, end: str) -> None:
    if start.encode("utf-8") > end.encode("utf-8"):
        raise InvalidRange(f"start {start!r} > end {end!r}")


class EmbeddedKV:
    backend = Backend.EMBEDDED_KV

    def __init__(self) -> None:
        self._data: dict[str, Entry] = {}
        self._keys: list[str] = []

    def get(self, key: str) -> Entry | None:
        return self._data.get(key)

    def put(self, key: str, value: bytes, version: Version) -> None:
        if key not in self._data:
            bisect.insort(self._keys, key)
        self._data[key] = (value, version)

    def delete(self, key: str) -> None:
        if self._data.pop(key, None) is not None:
            i = bisect.bisect_left(self._keys, key)
            del self._keys[i]

    def range(self, start: str, end: str) -> list[tuple[str, bytes, Version]]:
        check_range(start, end)
        lo = bisect.bisect_left(self._keys, start)
        hi = bisect.bisect_left(self._keys, end)
        return [(k, *self._data[k]) for k in self._keys[lo:hi]]

    def items(self) -> Iterator[tuple[str, bytes, Version]]:
        for k in self._keys:
            yield (k, *self._data[k])

    def __len__(self) -> int:
        return len(self._data)


class DocumentStore:
    backend = Backend.DOCUMENT_STORE

    def __init__(self) -> None:
        self._docs: dict[str, dict[str, Any]] = {}

    def get(self, key: str) -> Entry | None:
        doc = self._docs.get(key)
        if doc is None:
            return None
        return doc["_raw"], doc["_rev"]

    def put(self, key: str, value: bytes, version: Version) -> None:
        try:
            parsed = json.loads(value.decode("utf-8"))
        except (UnicodeDecodeError, ValueError):
            parsed = None
        self._docs[key] = {
            "_id": key,
            "_rev": version,
            "_raw": value,
            "data": parsed if isinstance(parsed, dict) else None,
        }

    def delete(self, key: str) -> None:
        self._docs.pop(key, None)

    def range(self, start: str, end: str) -> list[tuple[str, bytes, Version]]:
        check_range(start, end)
        hits = sorted(k for k in self._docs if start <= k < end)
        return [(k, self._docs[k]["_raw"], self._docs[k]["_rev"]) for k in hits]

    def find(self, selector: dict[str, Any]) -> list[str]:
        """Keys of JSON documents whose top-level fields equal every
        ``selector`` entry, ascending."""
        out = []
        for key, doc in self._docs.items():
            data = doc["data"]
            if data is not None and all(k in data and data[k] == v for k, v in selector.items()):
                out.append(key)
        return sorted(out)

    def items(self) -> Iterator[tuple[str, bytes, Version]]:
        for k in sorted(self._docs):
            yield k, self._docs[k]["_raw"], self._docs[k]["_rev"]

    def __len__(self) -> int:
        return len(self._docs)


def make_state(backend: Backend | str) -> EmbeddedKV | DocumentStore:
    backend = Backend(backend)
    if backend is Backend.EMBEDDED_KV:
        return EmbeddedKV()
    return DocumentStore()
