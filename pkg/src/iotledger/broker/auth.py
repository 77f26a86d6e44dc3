"""Connection authentication: the broker trusts only rights returned by a
committed verify_challenge transaction."""

from __future__ import annotations

import json
import logging
from typing import Any, Callable, Protocol

from ..ledger.block import ValidationFlag
from ..txflow.gateway import Gateway, Timeout
from ..txflow.peer import now_ms
from ..txflow.simulate import ChaincodeError
from .topics import covers, match

log = logging.getLogger(__name__)

Rights = list[dict[str, Any]]


class AuthFailure(Exception):
    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class NotAuthorized(Exception):
    pass


class Authenticator(Protocol):
    def authenticate(self, client_id: str, challenge_id: str, signature_b64: str) -> Rights: ...


def may_publish(rights: Rights, topic: str) -> bool:
    return any("publish" in r["rights"] and match(r["resource"], topic) for r in rights)


def may_subscribe(rights: Rights, filter_: str) -> bool:
    return any("subscribe" in r["rights"] and covers(r["resource"], filter_) for r in rights)


class StaticAuthenticator:
    """Fixed rights per client id and no cryptographic check.  For broker
    tests and local experiments only."""

    def __init__(self, rights: dict[str, Rights]) -> None:
        self.rights = rights

    def authenticate(self, client_id: str, challenge_id: str, signature_b64: str) -> Rights:
        if client_id not in self.rights:
            raise AuthFailure("UnknownSubject", client_id)
        return self.rights[client_id]


class LedgerAuthenticator:
    """Submits verify_challenge through the endorse/order/commit pipeline and
    accepts the connection only on a Valid commit for the same subject.  A
    concurrent reuse of the challenge loses the MVCC race and is refused."""

    def __init__(self, gateway: Gateway, clock: Callable[[], int] = now_ms, timeout_s: float = 30.0) -> None:
        self.gateway = gateway
        self.clock = clock
        self.timeout_s = timeout_s

    def authenticate(self, client_id: str, challenge_id: str, signature_b64: str) -> Rights:
        try:
            result = self.gateway.submit(
                "verify_challenge", challenge_id, signature_b64, self.clock(), timeout_s=self.timeout_s
            )
        except ChaincodeError as exc:
            raise AuthFailure(exc.code, exc.message) from None
        except Timeout:
            raise AuthFailure("Timeout", challenge_id) from None
        if result.flag is ValidationFlag.MVCC_CONFLICT:
            raise AuthFailure("AlreadyUsed", "challenge consumed by a concurrent transaction")
        if not result.valid:
            raise AuthFailure(result.flag.value, "verify_challenge was not committed as valid")
        granted = json.loads(result.payload)
        if granted["subject"] != client_id:
            raise AuthFailure("SubjectMismatch", f"challenge belongs to {granted['subject']}")
        log.info("authenticated %s via challenge %s", client_id, challenge_id)
        return granted["rights"]
