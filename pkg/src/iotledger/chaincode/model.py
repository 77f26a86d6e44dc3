from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Any

from ..encoding import as_bytes, b64


class SensorType(str, enum.Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    GAS = "gas"
    MOTION = "motion"
    PRESSURE = "pressure"
    CAMERA_URL = "camera_url"
    OTHER = "other"


class Right(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    SUBSCRIBE = "subscribe"
    PUBLISH = "publish"


def dumps(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class Asset:
    asset_id: str
    device_id: str
    sensor_type: SensorType
    payload: bytes
    checksum: str
    version: int
    created_tx: str
    updated_tx: str
    owner_org: str
    timestamp: int

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["sensor_type"] = self.sensor_type.value
        d["payload"] = b64(self.payload)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Asset":
        return cls(
            asset_id=d["asset_id"],
            device_id=d["device_id"],
            sensor_type=SensorType(d["sensor_type"]),
            payload=as_bytes(d["payload"]),
            checksum=d["checksum"],
            version=int(d["version"]),
            created_tx=d["created_tx"],
            updated_tx=d["updated_tx"],
            owner_org=d["owner_org"],
            timestamp=int(d["timestamp"]),
        )

    def encode(self) -> bytes:
        return dumps(self.to_dict())

    @classmethod
    def decode(cls, raw: bytes) -> "Asset":
        return cls.from_dict(json.loads(raw))


@dataclass(frozen=True)
class AccessPolicy:
    subject: str
    resource: str
    rights: frozenset[Right]
    granted_by: str
    expires: int | None = None  # ms; None = never

    def active(self, now: int) -> bool:
        return self.expires is None or now <= self.expires

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "resource": self.resource,
            "rights": sorted(r.value for r in self.rights),
            "granted_by": self.granted_by,
            "expires": self.expires,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AccessPolicy":
        return cls(
            subject=d["subject"],
            resource=d["resource"],
            rights=frozenset(Right(r) for r in d["rights"]),
            granted_by=d["granted_by"],
            expires=d["expires"],
        )


@dataclass(frozen=True)
class DeviceRecord:
    device_id: str
    public_key: bytes
    owner_org: str
    registered_tx: str
    topics: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, Any]:
        return {
            "device_id": self.device_id,
            "public_key": b64(self.public_key),
            "owner_org": self.owner_org,
            "registered_tx": self.registered_tx,
            "topics": list(self.topics),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DeviceRecord":
        return cls(
            device_id=d["device_id"],
            public_key=as_bytes(d["public_key"]),
            owner_org=d["owner_org"],
            registered_tx=d["registered_tx"],
            topics=tuple(d["topics"]),
        )


@dataclass(frozen=True)
class ChallengeRecord:
    challenge_id: str
    nonce: bytes
    subject: str
    public_key: bytes
    issued_at: int
    ttl_ms: int
    used: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "challenge_id": self.challenge_id,
            "nonce": b64(self.nonce),
            "subject": self.subject,
            "public_key": b64(self.public_key),
            "issued_at": self.issued_at,
            "ttl_ms": self.ttl_ms,
            "used": self.used,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChallengeRecord":
        return cls(
            challenge_id=d["challenge_id"],
            nonce=as_bytes(d["nonce"]),
            subject=d["subject"],
            public_key=as_bytes(d["public_key"]),
            issued_at=int(d["issued_at"]),
            ttl_ms=int(d["ttl_ms"]),
            used=bool(d["used"]),
        )
