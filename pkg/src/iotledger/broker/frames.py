"""Newline-delimited JSON frames exchanged between clients and the broker."""

from __future__ import annotations

import binascii
import json
from dataclasses import dataclass
from typing import Any, Union

from ..encoding import b64, unb64

REFUSED = 128
MAX_PACKET_ID = 65535
ACK_TYPES = ("puback", "pubrec", "pubrel", "pubcomp")


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Connect:
    client_id: str
    clean: bool
    challenge_id: str
    signature_b64: str

    def to_wire(self) -> dict[str, Any]:
        return {
            "type": "connect",
            "client_id": self.client_id,
            "clean": self.clean,
            "challenge_id": self.challenge_id,
            "signature_b64": self.signature_b64,
        }


@dataclass(frozen=True)
class Connack:
    session_present: bool
    code: str = "ok"

    def to_wire(self) -> dict[str, Any]:
        return {"type": "connack", "session_present": self.session_present, "code": self.code}


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes
    qos: int = 0
    retain: bool = False
    packet_id: int | None = None
    dup: bool = False

    def to_wire(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "type": "publish",
            "topic": self.topic,
            "payload_b64": b64(self.payload),
            "qos": self.qos,
            "retain": self.retain,
        }
        if self.packet_id is not None:
            d["packet_id"] = self.packet_id
        if self.dup:
            d["dup"] = True
        return d


@dataclass(frozen=True)
class Ack:
    type: str
    packet_id: int

    def to_wire(self) -> dict[str, Any]:
        return {"type": self.type, "packet_id": self.packet_id}


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    filters: tuple[tuple[str, int], ...]

    def to_wire(self) -> dict[str, Any]:
        return {
            "type": "subscribe",
            "packet_id": self.packet_id,
            "filters": [{"filter": f, "max_qos": q} for f, q in self.filters],
        }


@dataclass(frozen=True)
class Suback:
    packet_id: int
    granted: tuple[int, ...]

    def to_wire(self) -> dict[str, Any]:
        return {"type": "suback", "packet_id": self.packet_id, "granted": list(self.granted)}


@dataclass(frozen=True)
class Disconnect:
    def to_wire(self) -> dict[str, Any]:
        return {"type": "disconnect"}


Frame = Union[Connect, Connack, Publish, Ack, Subscribe, Suback, Disconnect]


def encode(frame: Frame) -> bytes:
    return json.dumps(frame.to_wire(), separators=(",", ":"), ensure_ascii=False).encode() + b"\n"


def _keys(d: dict, required: set[str], optional: frozenset[str] = frozenset()) -> None:
    have = set(d) - {"type"}
    if not required <= have or not have <= required | optional:
        raise FrameError(f"{d.get('type')}: fields {sorted(have)}, expected {sorted(required)}")


def _bool(v: Any, name: str) -> bool:
    if not isinstance(v, bool):
        raise FrameError(f"{name} must be a boolean")
    return v


def _int(v: Any, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise FrameError(f"{name} must be an integer")
    return v


def _str(v: Any, name: str) -> str:
    if not isinstance(v, str):
        raise FrameError(f"{name} must be a string")
    return v


def _pid(v: Any) -> int:
    pid = _int(v, "packet_id")
    if not 1 <= pid <= MAX_PACKET_ID:
        raise FrameError(f"packet_id {pid} out of range")
    return pid


def _qos(v: Any, name: str = "qos") -> int:
    q = _int(v, name)
    if q not in (0, 1, 2):
        raise FrameError(f"{name} must be 0, 1 or 2")
    return q


def from_wire(d: Any) -> Frame:
    if not isinstance(d, dict) or not isinstance(d.get("type"), str):
        raise FrameError("frame must be an object with a string 'type'")
    kind = d["type"]
    if kind == "connect":
        _keys(d, {"client_id", "clean", "challenge_id", "signature_b64"})
        return Connect(
            _str(d["client_id"], "client_id"),
            _bool(d["clean"], "clean"),
            _str(d["challenge_id"], "challenge_id"),
            _str(d["signature_b64"], "signature_b64"),
        )
    if kind == "connack":
        _keys(d, {"session_present", "code"})
        return Connack(_bool(d["session_present"], "session_present"), _str(d["code"], "code"))
    if kind == "publish":
        _keys(d, {"topic", "payload_b64", "qos", "retain"}, frozenset({"packet_id", "dup"}))
        qos = _qos(d["qos"])
        pid = d.get("packet_id")
        if qos == 0 and pid is not None:
            raise FrameError("QoS 0 publish carries no packet_id")
        if qos > 0:
            if pid is None:
                raise FrameError("QoS 1/2 publish needs a packet_id")
            pid = _pid(pid)
        try:
            payload = unb64(_str(d["payload_b64"], "payload_b64"))
        except (ValueError, binascii.Error) as exc:
            raise FrameError(f"payload_b64: {exc}") from None
        return Publish(
            _str(d["topic"], "topic"),
            payload,
            qos,
            _bool(d["retain"], "retain"),
            pid,
            _bool(d.get("dup", False), "dup"),
        )
    if kind in ACK_TYPES:
        _keys(d, {"packet_id"})
        return Ack(kind, _pid(d["packet_id"]))
    if kind == "subscribe":
        _keys(d, {"packet_id", "filters"})
        fs = d["filters"]
        if not isinstance(fs, list) or not fs:
            raise FrameError("filters must be a non-empty list")
        out = []
        for f in fs:
            if not isinstance(f, dict) or set(f) != {"filter", "max_qos"}:
                raise FrameError("each filter needs exactly 'filter' and 'max_qos'")
            out.append((_str(f["filter"], "filter"), _qos(f["max_qos"], "max_qos")))
        return Subscribe(_pid(d["packet_id"]), tuple(out))
    if kind == "suback":
        _keys(d, {"packet_id", "granted"})
        g = d["granted"]
        if not isinstance(g, list) or any(_int(x, "granted") not in (0, 1, 2, REFUSED) for x in g):
            raise FrameError("granted must list QoS levels or 128")
        return Suback(_pid(d["packet_id"]), tuple(g))
    if kind == "disconnect":
        _keys(d, set())
        return Disconnect()
    raise FrameError(f"unknown frame type {kind!r}")


def decode(line: bytes | str) -> Frame:
    try:
        d = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FrameError(f"not JSON: {exc}") from None
    return from_wire(d)
