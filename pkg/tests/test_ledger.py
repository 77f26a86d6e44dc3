import random
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotledger.encoding import ZERO_DIGEST, digest_of
from iotledger.ledger import (
    Block,
    Channel,
    ChainMismatch,
    OutOfOrder,
    ReadWriteSet,
    ValidationFlag,
    genesis_block,
    verify_chain,
)
from iotledger.ledger.block import KVWrite, Transaction, Version, proposal_fields
from iotledger.ledger.export import (
    CorruptBlockFile,
    block_path,
    export_blocks,
    load_blocks,
    verify_exported,
)
from iotledger.ledger.state import DocumentStore, EmbeddedKV, InvalidRange, make_state

from oracles import ShadowMap

CH = "ch1"


def tx(writes: dict[str, bytes | None], n: int) -> Transaction:
    nonce = n.to_bytes(16, "big")
    fields = proposal_fields(CH, "test", "put", (), None, nonce)
    return Transaction(
        tx_id=digest_of(fields),
        channel_id=CH,
        chaincode_id="test",
        function="put",
        args=(),
        creator=None,
        nonce=nonce,
        rw_set=ReadWriteSet(writes=tuple(KVWrite(k, v) for k, v in sorted(writes.items()))),
        endorsements=(),
        client_signature=b"",
    )


def chain(n_blocks: int, seed: int = 0) -> list[Block]:
    rng = random.Random(seed)
    blocks = [genesis_block(CH, ["Org1", "Org2"], 0)]
    prev_commit = blocks[0].commit_hash
    counter = 0
    for number in range(1, n_blocks):
        txs = []
        for _ in range(rng.randint(1, 3)):
            counter += 1
            txs.append(tx({f"k{rng.randrange(5)}": rng.randbytes(4)}, counter))
        raw = Block.build(number, blocks[-1].hash, 1000 * number, tuple(txs))
        flags = tuple(rng.choice([ValidationFlag.VALID, ValidationFlag.MVCC_CONFLICT]) for _ in txs)
        blocks.append(raw.with_flags(flags, prev_commit))
        prev_commit = blocks[-1].commit_hash
    return blocks


def test_genesis():
    g = genesis_block(CH, ["Org1", "Org2"])
    assert g.number == 0 and g.prev_hash == ZERO_DIGEST
    assert Channel(g).members == {"Org1", "Org2"}
    assert verify_chain([g]) is None


def test_chain_links_verify():
    blocks = chain(20)
    assert verify_chain(blocks) is None
    for a, b in zip(blocks, blocks[1:]):
        assert b.prev_hash == a.hash


def test_block_dict_roundtrip():
    for b in chain(5):
        assert Block.from_dict(b.to_dict()) == b


@pytest.mark.parametrize("field", ["timestamp", "data_hash", "prev_hash", "flags", "commit_hash"])
def test_verify_chain_pinpoints_edit(field):
    blocks = chain(10, seed=3)
    victim = blocks[6]
    d = victim.to_dict()
    if field == "timestamp":
        d["timestamp"] = str(int(d["timestamp"]) + 1)
    elif field == "flags":
        d["validation_flags"] = ["BadSignature"] * len(d["validation_flags"])
    else:
        d[field] = "0" * 63 + "1"
    blocks[6] = Block.from_dict(d)
    assert verify_chain(blocks) == 6


def test_channel_applies_only_valid_writes():
    g = genesis_block(CH, ["Org1"])
    c = Channel(g)
    t1, t2 = tx({"a": b"1"}, 1), tx({"a": b"2", "b": b"x"}, 2)
    b1 = Block.build(1, g.hash, 10, (t1, t2)).with_flags(
        (ValidationFlag.VALID, ValidationFlag.MVCC_CONFLICT), g.commit_hash
    )
    c.append_block(b1)
    assert c.state_get("a") == (b"1", Version(1, 0))
    assert c.state_get("b") is None
    assert c.get_transaction(t2.tx_id)[2] is ValidationFlag.MVCC_CONFLICT


def test_history_and_tombstones():
    g = genesis_block(CH, ["Org1"])
    c = Channel(g)
    prev = g
    for n, value in enumerate([b"1", None, b"3"], start=1):
        blk = Block.build(n, prev.hash, n, (tx({"k": value}, n),)).with_flags(
            (ValidationFlag.VALID,), prev.commit_hash
        )
        c.append_block(blk)
        prev = blk
    h = c.history_query("k")
    assert [e.value for e in h] == [b"1", None, b"3"]
    assert [e.is_delete for e in h] == [False, True, False]
    assert [e.version for e in h] == [Version(1, 0), Version(2, 0), Version(3, 0)]


def test_append_out_of_order_and_mismatch():
    blocks = chain(4)
    c = Channel(blocks[0])
    with pytest.raises(OutOfOrder):
        c.append_block(blocks[2])
    wrong = Block.build(1, "ab" * 32, 0, (tx({"z": b"1"}, 99),)).with_flags(
        (ValidationFlag.VALID,), blocks[0].commit_hash
    )
    with pytest.raises(ChainMismatch):
        c.append_block(wrong)


def test_from_blocks_rejects_broken_chain():
    blocks = chain(5)
    d = blocks[3].to_dict()
    d["timestamp"] = "1"
    blocks[3] = Block.from_dict(d)
    with pytest.raises(ChainMismatch):
        Channel.from_blocks(blocks)


def test_replay_matches_shadow_state():
    blocks = chain(30, seed=9)
    shadow = ShadowMap()
    for b in blocks[1:]:
        for t, f in zip(b.transactions, b.validation_flags):
            if f is ValidationFlag.VALID:
                for w in t.rw_set.writes:
                    shadow.put(w.key, w.value)
    c = Channel.from_blocks(blocks)
    assert {k: v for k, v, _ in c.snapshot_items()} == shadow.d


# -- state backends -------------------------------------------------------

keys = st.text(alphabet="ab/é0", min_size=1, max_size=4)
ops = st.lists(
    st.tuples(st.sampled_from(["put", "del"]), keys, st.binary(max_size=6)), max_size=60
)


@settings(max_examples=60, deadline=None)
@given(ops, st.lists(st.tuples(keys, keys), max_size=10))
def test_backends_agree_with_shadow(op_list, ranges):
    kv, doc, shadow = EmbeddedKV(), DocumentStore(), ShadowMap()
    for i, (op, k, v) in enumerate(op_list):
        for s in (kv, doc):
            if op == "put":
                s.put(k, v, Version(1, i))
            else:
                s.delete(k)
        shadow.put(k, v) if op == "put" else shadow.delete(k)
    for k in shadow.d.keys() | {"zz"}:
        assert (kv.get(k) or (None,))[0] == (doc.get(k) or (None,))[0] == shadow.get(k)
    for a, b in ranges:
        lo, hi = sorted([a, b], key=str.encode)
        expect = shadow.range(lo, hi)
        assert [(k, v) for k, v, _ in kv.range(lo, hi)] == expect
        assert [(k, v) for k, v, _ in doc.range(lo, hi)] == expect


def test_invalid_range():
    for s in (EmbeddedKV(), DocumentStore()):
        with pytest.raises(InvalidRange):
            s.range("b", "a")


def test_document_store_parses_json_values():
    d = make_state("document-store")
    d.put("x", b'{"device_id": "d1", "v": 2}', Version(1, 0))
    d.put("y", b"not json", Version(1, 1))
    assert d.find({"device_id": "d1"}) == ["x"]


# -- exported files -------------------------------------------------------


def test_export_roundtrip(tmp_path):
    blocks = chain(8)
    export_blocks(tmp_path, CH, blocks)
    assert load_blocks(tmp_path, CH) == blocks
    assert verify_exported(tmp_path, CH) is None


def test_tamper_detected_at_block(tmp_path):
    blocks = chain(12, seed=4)
    export_blocks(tmp_path, CH, blocks)
    rng = random.Random(1)
    for n in range(len(blocks)):
        work = tmp_path / f"w{n}"
        shutil.copytree(tmp_path / CH, work / CH)
        p = block_path(work, CH, n)
        raw = bytearray(p.read_bytes())
        raw[rng.randrange(len(raw))] ^= 1 << rng.randrange(8)
        p.write_bytes(bytes(raw))
        assert verify_exported(work, CH) == n
        try:
            assert verify_chain(load_blocks(work, CH)) == n
        except CorruptBlockFile as exc:
            assert exc.number == n


def test_missing_block_file(tmp_path):
    export_blocks(tmp_path, CH, chain(5))
    block_path(tmp_path, CH, 2).unlink()
    assert verify_exported(tmp_path, CH) == 2
