"""Commit-time checks for an ordered block: signatures, endorsement
policy, then MVCC against committed state plus earlier valid transactions
of the same block."""

from __future__ import annotations

from ..encoding import canonical
from ..identity import MspRegistry, Role, UnknownIssuer, ValidationResult, verify
from ..ledger.block import Block, Endorsement, Transaction, ValidationFlag, Version
from ..ledger.channel import Channel
from .policy import Policy


def _cert_ok(msp: MspRegistry, cert, now: int) -> bool:
    try:
        return msp.validate(cert, now) is ValidationResult.VALID
    except UnknownIssuer:
        return False


def _endorsement_ok(msp: MspRegistry, tx: Transaction, e: Endorsement, rw_hash: str, now: int) -> bool:
    if e.rw_set_hash != rw_hash or e.endorser.role is not Role.PEER:
        return False
    if not _cert_ok(msp, e.endorser, now):
        return False
    return verify(
        e.endorser.public_key,
        Endorsement.signed_bytes(tx.tx_id, e.rw_set_hash, e.response_payload),
        e.signature,
    )


def signatures_ok(channel: Channel, msp: MspRegistry, tx: Transaction, now: int) -> bool:
    creator = tx.creator
    if creator is None or tx.channel_id != channel.channel_id:
        return False
    if tx.computed_tx_id() != tx.tx_id:
        return False
    if not channel.is_member(creator.org) or not _cert_ok(msp, creator, now):
        return False
    if not verify(creator.public_key, canonical(tx.proposal_dict()), tx.client_signature):
        return False
    if not tx.endorsements:
        return False
    rw_hash = tx.rw_set.digest()
    return all(_endorsement_ok(msp, tx, e, rw_hash, now) for e in tx.endorsements)


class _BlockView:
    """Committed state overlaid with the writes of earlier valid
    transactions in the block being validated."""

    def __init__(self, channel: Channel) -> None:
        self.channel = channel
        self.updated: dict[str, Version | None] = {}

    def version(self, key: str) -> Version | None:
        if key in self.updated:
            return self.updated[key]
        entry = self.channel.state.get(key)
        return entry[1] if entry else None

    def range_versions(self, start: str, end: str) -> list[tuple[str, Version]]:
        rows = {k: v for k, _, v in self.channel.state.range(start, end)}
        for key, version in self.updated.items():
            if start <= key < end:
                if version is None:
                    rows.pop(key, None)
                else:
                    rows[key] = version
        return sorted(rows.items())

    def apply(self, tx: Transaction, version: Version) -> None:
        for w in tx.rw_set.writes:
            self.updated[w.key] = None if w.value is None else version


def mvcc_ok(view: _BlockView, tx: Transaction) -> bool:
    for read in tx.rw_set.reads:
        if view.version(read.key) != read.version:
            return False
    for rr in tx.rw_set.range_reads:
        if view.range_versions(rr.start, rr.end) != list(rr.observed):
            return False
    return True


def validate_block(channel: Channel, block: Block, msp: MspRegistry, policy: Policy) -> Block:
    """Return ``block`` with one validation flag per transaction and the
    commit hash chained onto the channel head.  Never raises for a bad
    transaction; failures are flags."""
    flags: list[ValidationFlag] = []
    with channel.lock:
        view = _BlockView(channel)
        seen: set[str] = set()
        for tx_num, tx in enumerate(block.transactions):
            if tx.tx_id in seen or channel.has_transaction(tx.tx_id):
                flag = ValidationFlag.BAD_SIGNATURE
            elif not signatures_ok(channel, msp, tx, block.timestamp):
                flag = ValidationFlag.BAD_SIGNATURE
            elif not policy.evaluate(
                frozenset(e.endorser.org for e in tx.endorsements if channel.is_member(e.endorser.org))
            ):
                flag = ValidationFlag.POLICY_FAILURE
            elif not mvcc_ok(view, tx):
                flag = ValidationFlag.MVCC_CONFLICT
            else:
                flag = ValidationFlag.VALID
                view.apply(tx, Version(block.number, tx_num))
            seen.add(tx.tx_id)
            flags.append(flag)
        return block.with_flags(tuple(flags), channel.head.commit_hash)
