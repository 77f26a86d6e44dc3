"""The access-control contract for IoT sensor assets.

World-state layout::

    asset/<asset_id>            current Asset
    ver/<asset_id>/<version>    Asset snapshot written by the tx that made it
    dev/<device_id>             DeviceRecord
    pol/<subject>/<resource>    AccessPolicy
    chal/<challenge_id>         ChallengeRecord

Every function is deterministic over (args, committed state, creator), so
endorsers at the same height produce identical read/write sets.  Clocks
come from explicit ``now``/``timestamp`` arguments; grant expiry on plain
reads is judged against the newest committed block's timestamp.
"""

from __future__ import annotations

import binascii
import json
import uuid
from typing import Any, Callable

from ..encoding import as_bytes, b64, sha256, sha256_hex
from ..identity import Certificate, MalformedKey, Role, verify
from ..ledger.state import InvalidRange
from ..txflow.simulate import ChaincodeError, TxStub
from .model import (
    AccessPolicy,
    Asset,
    ChallengeRecord,
    DeviceRecord,
    Right,
    SensorType,
    dumps,
)

DEFAULT_CHALLENGE_TTL_MS = 60_000

ASSET_PREFIX = "asset/"


def asset_key(asset_id: str) -> str:
    return f"asset/{asset_id}"


def version_key(asset_id: str, version: int) -> str:
    return f"ver/{asset_id}/{version}"


def device_key(device_id: str) -> str:
    return f"dev/{device_id}"


def policy_key(subject: str, resource: str) -> str:
    return f"pol/{subject}/{resource}"


def challenge_key(challenge_id: str) -> str:
    return f"chal/{challenge_id}"


def _prefix_end(prefix: str) -> str:
    return prefix[:-1] + chr(ord(prefix[-1]) + 1)


def check_uuid(value: str) -> str:
    try:
        parsed = uuid.UUID(value)
    except (ValueError, AttributeError, TypeError):
        raise ChaincodeError("MalformedUUID", repr(value)) from None
    if str(parsed) != value:
        raise ChaincodeError("MalformedUUID", f"{value!r} is not canonical lowercase form")
    return value


def _int_arg(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ChaincodeError("InvalidArgument", f"{name} must be an integer") from None


def _str(arg: bytes) -> str:
    try:
        return arg.decode("utf-8")
    except UnicodeDecodeError:
        raise ChaincodeError("InvalidArgument", "argument is not UTF-8") from None


def derived_challenge(tx_id: str) -> tuple[str, bytes]:
    """Challenge id and nonce for the issuing transaction.  Both derive
    from the tx id, which hashes the client's random proposal nonce, so
    every endorser computes the same values."""
    seed = bytes.fromhex(tx_id)
    cid = uuid.UUID(bytes=sha256(b"challenge-id" + seed)[:16], version=4)
    return str(cid), sha256(b"challenge-nonce" + seed)


class AssetContract:
    name = "iot-access"

    def __init__(self) -> None:
        self._functions: dict[str, Callable[..., Any]] = {
            "store_asset": self.store_asset,
            "query_checksum": self.query_checksum,
            "get_asset_by_txid": self.get_asset_by_txid,
            "get_version_by_txid": self.get_version_by_txid,
            "get_lineage": self.get_lineage,
            "get_history": self.get_history,
            "get_asset_version": self.get_asset_version,
            "key_range_query": self.key_range_query,
            "get_sensor_info": self.get_sensor_info,
            "register_device": self.register_device,
            "grant": self.grant,
            "revoke_grant": self.revoke_grant,
            "issue_challenge": self.issue_challenge,
            "verify_challenge": self.verify_challenge,
            "get_assets_from_batch": self.get_assets_from_batch,
        }

    @property
    def functions(self) -> list[str]:
        return sorted(self._functions)

    def invoke(self, stub: TxStub, function: str, args: list[bytes]) -> bytes:
        fn = self._functions.get(function)
        if fn is None:
            raise ChaincodeError("UnknownFunction", function)
        try:
            result = fn(stub, *args)
        except TypeError as exc:
            if "positional argument" in str(exc):
                raise ChaincodeError("InvalidArgument", f"{function}: {exc}") from None
            raise
        return dumps(result)

    # -- authorization helpers -------------------------------------------

    @staticmethod
    def _device(stub: TxStub, device_id: str) -> DeviceRecord | None:
        raw = stub.get_state(device_key(device_id))
        return DeviceRecord.from_dict(json.loads(raw)) if raw else None

    @staticmethod
    def _grant(stub: TxStub, subject: str, resource: str) -> AccessPolicy | None:
        raw = stub.get_state(policy_key(subject, resource))
        return AccessPolicy.from_dict(json.loads(raw)) if raw else None

    def _has_right(self, stub: TxStub, caller: Certificate, resource: str, right: Right, now: int) -> bool:
        grant = self._grant(stub, caller.subject, resource)
        return grant is not None and right in grant.rights and grant.active(now)

    def _can_read_device(self, stub: TxStub, caller: Certificate, device_id: str, owner_org: str) -> bool:
        if caller.subject == device_id and caller.role is Role.DEVICE:
            return True
        if caller.role is Role.ADMIN and caller.org == owner_org:
            return True
        return self._has_right(stub, caller, device_id, Right.READ, stub.ledger_time)

    def _require_read(self, stub: TxStub, asset: Asset) -> None:
        if not self._can_read_device(stub, stub.creator, asset.device_id, asset.owner_org):
            raise ChaincodeError("Unauthorized", f"{stub.creator.subject} may not read {asset.asset_id}")

    def _load_asset(self, stub: TxStub, asset_id: str) -> Asset:
        check_uuid(asset_id)
        raw = stub.get_state(asset_key(asset_id))
        if raw is None:
            raise ChaincodeError("NotFound", f"asset {asset_id}")
        return Asset.decode(raw)

    def _rights_of(self, stub: TxStub, subject: str, now: int) -> list[dict[str, Any]]:
        prefix = f"pol/{subject}/"
        out: dict[str, set[str]] = {}
        for _, raw in stub.get_state_range(prefix, _prefix_end(prefix)):
            grant = AccessPolicy.from_dict(json.loads(raw))
            if grant.subject == subject and grant.active(now):
                out.setdefault(grant.resource, set()).update(r.value for r in grant.rights)
        device = self._device(stub, subject)
        if device is not None:
            for topic in device.topics:
                out.setdefault(topic, set()).add(Right.PUBLISH.value)
        return [{"resource": r, "rights": sorted(v)} for r, v in sorted(out.items())]

    def _require_admin_for(self, stub: TxStub, resource: str) -> None:
        caller = stub.creator
        if caller.role is not Role.ADMIN:
            raise ChaincodeError("Unauthorized", f"{caller.subject} is not an admin")
        device = self._device(stub, resource)
        if device is not None and device.owner_org != caller.org:
            raise ChaincodeError("Unauthorized", f"{resource} belongs to {device.owner_org}")

    # -- assets -----------------------------------------------------------

    def store_asset(self, stub, asset_id, device_id, sensor_type, payload, timestamp):
        asset_id, device_id = check_uuid(_str(asset_id)), _str(device_id)
        try:
            kind = SensorType(_str(sensor_type))
        except ValueError:
            raise ChaincodeError("InvalidArgument", f"unknown sensor type {sensor_type!r}") from None
        ts = _int_arg(_str(timestamp), "timestamp")
        caller = stub.creator
        device = self._device(stub, device_id)
        is_device = device is not None and caller.subject == device_id and caller.role is Role.DEVICE
        if device is None or not (
            is_device or self._has_right(stub, caller, device_id, Right.WRITE, stub.ledger_time)
        ):
            raise ChaincodeError("Unauthorized", f"{caller.subject} may not write for {device_id}")
        raw = stub.get_state(asset_key(asset_id))
        if raw is None:
            version, created_tx = 1, stub.tx_id
        else:
            prior = Asset.decode(raw)
            if prior.device_id != device_id:
                raise ChaincodeError("Unauthorized", f"asset {asset_id} belongs to {prior.device_id}")
            version, created_tx = prior.version + 1, prior.created_tx
        asset = Asset(
            asset_id=asset_id,
            device_id=device_id,
            sensor_type=kind,
            payload=bytes(payload),
            checksum=sha256_hex(bytes(payload)),
            version=version,
            created_tx=created_tx,
            updated_tx=stub.tx_id,
            owner_org=device.owner_org,
            timestamp=ts,
        )
        encoded = asset.encode()
        stub.put_state(asset_key(asset_id), encoded)
        stub.put_state(version_key(asset_id, version), encoded)
        return asset.to_dict()

    def query_checksum(self, stub, asset_id):
        asset = self._load_asset(stub, _str(asset_id))
        self._require_read(stub, asset)
        return asset.checksum

    def _asset_written_by(self, stub: TxStub, tx_id: str) -> Asset:
        tx = stub.get_transaction(_str(tx_id))
        if tx is not None:
            for w in tx.rw_set.writes:
                if w.key.startswith("ver/") and w.value is not None:
                    asset = Asset.decode(w.value)
                    self._require_read(stub, asset)
                    return asset
        raise ChaincodeError("NotFound", f"no asset written by {_str(tx_id)}")

    def get_asset_by_txid(self, stub, tx_id):
        return self._asset_written_by(stub, tx_id).to_dict()

    def get_version_by_txid(self, stub, tx_id):
        return self._asset_written_by(stub, tx_id).version

    def get_lineage(self, stub, asset_id):
        asset = self._load_asset(stub, _str(asset_id))
        self._require_read(stub, asset)
        lineage = []
        for v in range(1, asset.version + 1):
            raw = stub.get_state(version_key(asset.asset_id, v))
            if raw is None:
                raise ChaincodeError("NotFound", f"snapshot {v} of {asset.asset_id} missing")
            snap = Asset.decode(raw)
            lineage.append(
                {
                    "version": snap.version,
                    "tx_id": snap.updated_tx,
                    "checksum": snap.checksum,
                    "timestamp": snap.timestamp,
                }
            )
        return lineage

    def get_history(self, stub, asset_id):
        asset = self._load_asset(stub, _str(asset_id))
        self._require_read(stub, asset)
        out = []
        for h in stub.get_history(asset_key(asset.asset_id)):
            out.append(
                {
                    "tx_id": h.tx_id,
                    "timestamp": h.timestamp,
                    "version": h.version.to_dict(),
                    "is_delete": h.is_delete,
                    "value": None if h.value is None else Asset.decode(h.value).to_dict(),
                }
            )
        return out

    def get_asset_version(self, stub, asset_id, version):
        asset = self._load_asset(stub, _str(asset_id))
        self._require_read(stub, asset)
        v = _int_arg(_str(version), "version")
        if not 1 <= v <= asset.version:
            raise ChaincodeError("NotFound", f"version {v} of {asset.asset_id}")
        raw = stub.get_state(version_key(asset.asset_id, v))
        if raw is None:
            raise ChaincodeError("NotFound", f"snapshot {v} of {asset.asset_id} missing")
        return Asset.decode(raw).to_dict()

    def key_range_query(self, stub, start_id, end_id):
        start, end = _str(start_id), _str(end_id)
        try:
            rows = stub.get_state_range(asset_key(start), asset_key(end))
        except InvalidRange as exc:
            raise ChaincodeError("InvalidRange", str(exc)) from None
        out = []
        for _, raw in rows:
            asset = Asset.decode(raw)
            if self._can_read_device(stub, stub.creator, asset.device_id, asset.owner_org):
                out.append(asset.to_dict())
        return out

    def get_sensor_info(self, stub, device_id):
        device_id = _str(device_id)
        device = self._device(stub, device_id)
        if device is None:
            raise ChaincodeError("NotFound", f"device {device_id}")
        if not self._can_read_device(stub, stub.creator, device_id, device.owner_org):
            raise ChaincodeError("Unauthorized", f"{stub.creator.subject} may not read {device_id}")
        latest: dict[str, Asset] = {}
        for _, raw in stub.get_state_range(ASSET_PREFIX, _prefix_end(ASSET_PREFIX)):
            asset = Asset.decode(raw)
            if asset.device_id != device_id:
                continue
            cur = latest.get(asset.sensor_type.value)
            if cur is None or (asset.timestamp, asset.asset_id) > (cur.timestamp, cur.asset_id):
                latest[asset.sensor_type.value] = asset
        return {
            "device": device.to_dict(),
            "latest": {k: a.to_dict() for k, a in sorted(latest.items())},
        }

    def get_assets_from_batch(self, stub, *uuids):
        ids = [check_uuid(_str(u)) for u in uuids]
        out = []
        for asset_id in ids:
            raw = stub.get_state(asset_key(asset_id))
            if raw is None:
                out.append(None)
                continue
            asset = Asset.decode(raw)
            self._require_read(stub, asset)
            out.append(asset.to_dict())
        return out

    # -- registration and grants -----------------------------------------

    def register_device(self, stub, device_id, public_key, topics=b"[]"):
        device_id = _str(device_id)
        caller = stub.creator
        if caller.role is not Role.ADMIN:
            raise ChaincodeError("Unauthorized", f"{caller.subject} is not an admin")
        if not device_id or "/" in device_id:
            raise ChaincodeError("InvalidArgument", "device id must be non-empty and contain no '/'")
        try:
            key = as_bytes(_str(public_key))
            topic_list = json.loads(_str(topics))
        except (ValueError, binascii.Error) as exc:
            raise ChaincodeError("InvalidArgument", str(exc)) from None
        if len(key) != 32:
            raise ChaincodeError("InvalidArgument", "public key must be 32 bytes")
        if not isinstance(topic_list, list) or not all(isinstance(t, str) for t in topic_list):
            raise ChaincodeError("InvalidArgument", "topics must be a JSON list of strings")
        if stub.get_state(device_key(device_id)) is not None:
            raise ChaincodeError("DuplicateDevice", device_id)
        record = DeviceRecord(device_id, key, caller.org, stub.tx_id, tuple(topic_list))
        stub.put_state(device_key(device_id), dumps(record.to_dict()))
        return record.to_dict()

    def grant(self, stub, subject, resource, rights, expires=b""):
        subject, resource = _str(subject), _str(resource)
        if not subject or "/" in subject or not resource:
            raise ChaincodeError("InvalidArgument", "subject must be non-empty without '/'")
        self._require_admin_for(stub, resource)
        try:
            right_set = frozenset(Right(r.strip()) for r in _str(rights).split(",") if r.strip())
        except ValueError as exc:
            raise ChaincodeError("InvalidArgument", str(exc)) from None
        if not right_set:
            raise ChaincodeError("InvalidArgument", "no rights given")
        exp_text = _str(expires)
        exp = None if exp_text in ("", "never") else _int_arg(exp_text, "expires")
        grant = AccessPolicy(subject, resource, right_set, stub.creator.subject, exp)
        stub.put_state(policy_key(subject, resource), dumps(grant.to_dict()))
        return grant.to_dict()

    def revoke_grant(self, stub, subject, resource):
        subject, resource = _str(subject), _str(resource)
        self._require_admin_for(stub, resource)
        if stub.get_state(policy_key(subject, resource)) is None:
            raise ChaincodeError("NotFound", f"no grant for {subject} on {resource}")
        stub.del_state(policy_key(subject, resource))
        return {"subject": subject, "resource": resource, "revoked": True}

    # -- broker challenges -----------------------------------------------

    def issue_challenge(self, stub, subject, now, ttl_ms=None):
        subject = _str(subject)
        caller = stub.creator
        issued_at = _int_arg(_str(now), "now")
        ttl = DEFAULT_CHALLENGE_TTL_MS if ttl_ms is None else _int_arg(_str(ttl_ms), "ttl_ms")
        if caller.subject != subject:
            raise ChaincodeError("Unauthorized", "challenges are issued only to their subject")
        if caller.role is Role.DEVICE and self._device(stub, subject) is None:
            raise ChaincodeError("UnknownSubject", f"device {subject} is not registered")
        rights = self._rights_of(stub, subject, issued_at)
        if not any({"subscribe", "publish"} & set(r["rights"]) for r in rights):
            raise ChaincodeError("Unauthorized", f"{subject} holds no subscribe/publish right")
        challenge_id, nonce = derived_challenge(stub.tx_id)
        record = ChallengeRecord(challenge_id, nonce, subject, caller.public_key, issued_at, ttl)
        stub.put_state(challenge_key(challenge_id), dumps(record.to_dict()))
        return {
            "challenge_id": challenge_id,
            "nonce": b64(nonce),
            "subject": subject,
            "issued_at": issued_at,
            "ttl_ms": ttl,
        }

    def verify_challenge(self, stub, challenge_id, signature, now):
        challenge_id = _str(challenge_id)
        when = _int_arg(_str(now), "now")
        raw = stub.get_state(challenge_key(challenge_id))
        if raw is None:
            raise ChaincodeError("NotFound", f"challenge {challenge_id}")
        record = ChallengeRecord.from_dict(json.loads(raw))
        if record.used:
            raise ChaincodeError("AlreadyUsed", challenge_id)
        if when - record.issued_at > record.ttl_ms:
            raise ChaincodeError("Expired", challenge_id)
        try:
            sig = as_bytes(_str(signature))
            ok = verify(record.public_key, record.nonce, sig)
        except (ValueError, MalformedKey):
            ok = False
        if not ok:
            raise ChaincodeError("BadSignature", challenge_id)
        used = ChallengeRecord(**{**record.__dict__, "used": True})
        stub.put_state(challenge_key(challenge_id), dumps(used.to_dict()))
        return {"subject": record.subject, "rights": self._rights_of(stub, record.subject, when)}
