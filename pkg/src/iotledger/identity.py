"""Membership services: key pairs, a per-organisation certificate
authority, and the registry every peer consults to authenticate signers.

Signatures are Ed25519 (deterministic, 32-byte public keys, 64-byte
signatures).  Certificates are a flat record signed by the org CA over a
length-prefixed binary encoding of their fields; there are no chains.
"""

from __future__ import annotations

import enum
import json
import random
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Any

from cryptography.exceptions import InvalidSignature as _CryptoInvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .encoding import as_bytes, as_int, jsonable

PUBLIC_KEY_LEN = 32
PRIVATE_KEY_LEN = 32
SIGNATURE_LEN = 64

MS_PER_HOUR = 3_600_000
MS_PER_YEAR = 365 * 24 * MS_PER_HOUR


class IdentityError(Exception):
    """Base class for membership errors."""


class MalformedKey(IdentityError):
    pass


class DuplicateSubject(IdentityError):
    pass


class InvalidRole(IdentityError):
    pass


class UnknownIssuer(IdentityError):
    pass


class UnknownCertificate(IdentityError):
    pass


class Role(str, enum.Enum):
    CLIENT = "client"
    PEER = "peer"
    ORDERER = "orderer"
    DEVICE = "device"
    ADMIN = "admin"


class ValidationResult(str, enum.Enum):
    VALID = "Valid"
    INVALID_SIGNATURE = "InvalidSignature"
    EXPIRED = "Expired"
    REVOKED = "Revoked"


def _public_bytes(pub: Ed25519PublicKey) -> bytes:
    return pub.public_bytes(Encoding.Raw, PublicFormat.Raw)


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes = field(repr=False)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "KeyPair":
        """New key pair; pass a seeded ``rng`` for reproducible keys."""
        if rng is None:
            sk = Ed25519PrivateKey.generate()
        else:
            sk = Ed25519PrivateKey.from_private_bytes(rng.randbytes(PRIVATE_KEY_LEN))
        raw = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        return cls(public_key=_public_bytes(sk.public_key()), private_key=raw)

    @classmethod
    def from_private(cls, private_key: bytes) -> "KeyPair":
        if len(private_key) != PRIVATE_KEY_LEN:
            raise MalformedKey(f"private key must be {PRIVATE_KEY_LEN} bytes")
        sk = Ed25519PrivateKey.from_private_bytes(private_key)
        return cls(public_key=_public_bytes(sk.public_key()), private_key=private_key)

    def sign(self, message: bytes) -> bytes:
        return sign(self.private_key, message)


def sign(private_key: bytes, message: bytes) -> bytes:
    if not isinstance(private_key, (bytes, bytearray)) or len(private_key) != PRIVATE_KEY_LEN:
        raise MalformedKey(f"private key must be {PRIVATE_KEY_LEN} bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(private_key)).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    if len(signature) != SIGNATURE_LEN:
        return False
    try:
        pub = Ed25519PublicKey.from_public_bytes(bytes(public_key))
    except ValueError as exc:
        raise MalformedKey(str(exc)) from None
    try:
        pub.verify(bytes(signature), message)
    except _CryptoInvalidSignature:
        return False
    return True


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


@dataclass(frozen=True)
class Certificate:
    subject: str
    org: str
    role: Role
    public_key: bytes
    issuer: str
    serial: int
    not_after: int
    signature: bytes = b""

    def tbs_bytes(self) -> bytes:
        """Bytes covered by the CA signature: every field before
        ``signature`` in declaration order, strings and byte fields
        length-prefixed, integers as 8-byte big-endian."""
        return b"".join(
            [
                _lp(self.subject.encode("utf-8")),
                _lp(self.org.encode("utf-8")),
                _lp(self.role.value.encode("utf-8")),
                _lp(self.public_key),
                _lp(self.issuer.encode("utf-8")),
                struct.pack(">Q", self.serial),
                struct.pack(">Q", self.not_after),
            ]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "org": self.org,
            "role": self.role.value,
            "public_key": self.public_key,
            "issuer": self.issuer,
            "serial": self.serial,
            "not_after": self.not_after,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Certificate":
        try:
            role = Role(d["role"])
        except ValueError:
            raise InvalidRole(d["role"]) from None
        return cls(
            subject=d["subject"],
            org=d["org"],
            role=role,
            public_key=as_bytes(d["public_key"]),
            issuer=d["issuer"],
            serial=as_int(d["serial"]),
            not_after=as_int(d["not_after"]),
            signature=as_bytes(d["signature"]),
        )

    def to_json(self) -> str:
        return json.dumps(jsonable(self.to_dict(), ints_as_str=False), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Identity:
    """A certificate together with the key pair it certifies."""

    cert: Certificate
    keys: KeyPair = field(repr=False)

    @property
    def subject(self) -> str:
        return self.cert.subject

    @property
    def org(self) -> str:
        return self.cert.org

    def sign(self, message: bytes) -> bytes:
        return self.keys.sign(message)


class MspRegistry:
    """Trusted CA roots per org, issued members and the revocation set.

    Reads may run concurrently; issuance and revocation take the writer lock.
    """

    def __init__(self) -> None:
        self.ca_roots: dict[str, tuple[str, bytes]] = {}
        self.revoked: set[tuple[str, int]] = set()
        self.members: dict[str, Certificate] = {}
        self._issued: dict[tuple[str, int], Certificate] = {}
        self._sig_ok: dict[tuple[Certificate, bytes], bool] = {}
        self._lock = threading.Lock()

    def add_root(self, org: str, ca_name: str, public_key: bytes) -> None:
        with self._lock:
            self.ca_roots[org] = (ca_name, public_key)

    def ca_root(self, org: str) -> bytes:
        return self.ca_roots[org][1]

    def is_active(self, subject: str, now: int) -> bool:
        cert = self.members.get(subject)
        return cert is not None and self.validate(cert, now) is ValidationResult.VALID

    def register(self, cert: Certificate, now: int) -> None:
        with self._lock:
            current = self.members.get(cert.subject)
            if current is not None and self._check(current, now) is ValidationResult.VALID:
                raise DuplicateSubject(cert.subject)
            self.members[cert.subject] = cert
            self._issued[(cert.issuer, cert.serial)] = cert

    def validate(self, cert: Certificate, now: int) -> ValidationResult:
        return self._check(cert, now)

    def _check(self, cert: Certificate, now: int) -> ValidationResult:
        root = self.ca_roots.get(cert.org)
        if root is None or root[0] != cert.issuer:
            raise UnknownIssuer(f"{cert.issuer} for org {cert.org}")
        ok = self._sig_ok.get((cert, root[1]))
        if ok is None:
            ok = verify(root[1], cert.tbs_bytes(), cert.signature)
            self._sig_ok[(cert, root[1])] = ok
        if not ok:
            return ValidationResult.INVALID_SIGNATURE
        if (cert.issuer, cert.serial) in self.revoked:
            return ValidationResult.REVOKED
        if now > cert.not_after:
            return ValidationResult.EXPIRED
        return ValidationResult.VALID

    def revoke(self, issuer: str, serial: int) -> None:
        with self._lock:
            if (issuer, serial) not in self._issued:
                raise UnknownCertificate(f"{issuer}#{serial}")
            self.revoked.add((issuer, serial))

    def certificate(self, subject: str) -> Certificate:
        try:
            return self.members[subject]
        except KeyError:
            raise UnknownCertificate(subject) from None


def msp_validate(registry: MspRegistry, cert: Certificate, now: int) -> ValidationResult:
    return registry.validate(cert, now)


def msp_revoke(registry: MspRegistry, issuer: str, serial: int) -> None:
    registry.revoke(issuer, serial)


class CertificateAuthority:
    """The single issuing CA of one organisation."""

    def __init__(
        self,
        name: str,
        org: str,
        registry: MspRegistry,
        keys: KeyPair | None = None,
        next_serial: int = 1,
    ) -> None:
        self.name = name
        self.org = org
        self.keys = keys or KeyPair.generate()
        self.registry = registry
        self.next_serial = next_serial
        self._lock = threading.Lock()
        registry.add_root(org, name, self.keys.public_key)

    def issue(
        self,
        subject: str,
        role: Role | str,
        public_key: bytes,
        validity_ms: int,
        now: int,
    ) -> Certificate:
        if not subject:
            raise ValueError("subject must be non-empty")
        try:
            role = Role(role)
        except ValueError:
            raise InvalidRole(str(role)) from None
        if len(public_key) != PUBLIC_KEY_LEN:
            raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
        with self._lock:
            current = self.registry.members.get(subject)
            if current is not None and self.registry.validate(current, now) is ValidationResult.VALID:
                raise DuplicateSubject(subject)
            unsigned = Certificate(
                subject=subject,
                org=self.org,
                role=role,
                public_key=public_key,
                issuer=self.name,
                serial=self.next_serial,
                not_after=now + validity_ms,
            )
            cert = replace(unsigned, signature=self.keys.sign(unsigned.tbs_bytes()))
            self.registry.register(cert, now)
            self.next_serial += 1
        return cert

    def enroll(
        self,
        subject: str,
        role: Role | str,
        now: int,
        validity_ms: int = MS_PER_YEAR,
        rng: random.Random | None = None,
    ) -> Identity:
        """Generate a key pair and issue a certificate for it."""
        keys = KeyPair.generate(rng)
        return Identity(self.issue(subject, role, keys.public_key, validity_ms, now), keys)


def ca_issue(
    ca: CertificateAuthority,
    subject: str,
    org: str,
    role: Role | str,
    public_key: bytes,
    validity_ms: int,
    now: int,
) -> Certificate:
    if org != ca.org:
        raise UnknownIssuer(f"{ca.name} does not issue for {org}")
    return ca.issue(subject, role, public_key, validity_ms, now)
