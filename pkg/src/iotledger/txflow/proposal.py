from __future__ import annotations

import os
import random
from dataclasses import dataclass

from ..encoding import canonical, digest_of
from ..identity import Certificate, Identity, verify
from ..ledger.block import proposal_fields

NONCE_LEN = 16


def encode_arg(arg: bytes | str | int) -> bytes:
    if isinstance(arg, bytes):
        return arg
    if isinstance(arg, bool):
        return b"true" if arg else b"false"
    if isinstance(arg, int):
        return str(arg).encode("ascii")
    if isinstance(arg, str):
        return arg.encode("utf-8")
    raise TypeError(f"unsupported chaincode argument {type(arg).__name__}")


@dataclass(frozen=True)
class Proposal:
    channel_id: str
    chaincode_id: str
    function: str
    args: tuple[bytes, ...]
    creator: Certificate
    nonce: bytes
    client_signature: bytes

    @classmethod
    def create(
        cls,
        identity: Identity,
        channel_id: str,
        chaincode_id: str,
        function: str,
        args: list[bytes | str | int] | tuple = (),
        rng: random.Random | None = None,
    ) -> "Proposal":
        nonce = rng.randbytes(NONCE_LEN) if rng is not None else os.urandom(NONCE_LEN)
        encoded = tuple(encode_arg(a) for a in args)
        fields = proposal_fields(channel_id, chaincode_id, function, encoded, identity.cert, nonce)
        return cls(
            channel_id=channel_id,
            chaincode_id=chaincode_id,
            function=function,
            args=encoded,
            creator=identity.cert,
            nonce=nonce,
            client_signature=identity.sign(canonical(fields)),
        )

    def fields(self) -> dict:
        return proposal_fields(
            self.channel_id, self.chaincode_id, self.function, self.args, self.creator, self.nonce
        )

    @property
    def tx_id(self) -> str:
        return digest_of(self.fields())

    def signature_valid(self) -> bool:
        return verify(self.creator.public_key, canonical(self.fields()), self.client_signature)
