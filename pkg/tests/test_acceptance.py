"""Acceptance criteria, one test each, run at their stated tolerances.

The terminal summary prints one pass/fail line per criterion (see the
``criterion`` marker handling in conftest.py).
"""

import base64
import itertools
import json
import random
import statistics
import threading
import time

import pytest

from iotledger.bench import BenchRunner, default_config
from iotledger.bench.report import percentile
from iotledger.broker import FaultConfig, TcpBrokerServer, TcpClient
from iotledger.broker.auth import AuthFailure
from iotledger.chaincode import AssetContract
from iotledger.cli import ERROR_CODES, main
from iotledger.encoding import b64
from iotledger.identity import CertificateAuthority, KeyPair, MspRegistry, Role
from iotledger.ledger import Block, Channel, ReadWriteSet, ValidationFlag, genesis_block
from iotledger.ledger.block import Endorsement, KVWrite, Transaction, proposal_fields
from iotledger.ledger.export import block_numbers, block_path, export_blocks
from iotledger.network import fast_orderer
from iotledger.topology import three_org_topology
from iotledger.encoding import digest_of
from iotledger.txflow.peer import now_ms
from iotledger.txflow.policy import check_policy, parse_policy
from iotledger.txflow.simulate import ChaincodeError
from iotledger.workspace import Workspace

from oracles import (
    ShadowMap,
    asset_timeline,
    random_tree,
    read_block_files,
    replay_state,
    sha256_hex,
    tree_eval,
    tree_text,
)
from support import (
    CHANNEL,
    ledger_broker,
    new_uuid,
    pub_rights,
    sim_broker,
    sim_connect,
    signed_challenge,
    sub_rights,
)


# -- 1 ---------------------------------------------------------------------------


class DictStub:
    """Serial execution context: a plain dict, writes applied after the call."""

    def __init__(self, state: dict, tx_id: str, creator, ledger_time: int) -> None:
        self.state, self.tx_id, self.creator, self.ledger_time = state, tx_id, creator, ledger_time
        self.writes: dict[str, bytes | None] = {}

    def get_state(self, key):
        return self.state.get(key)

    def put_state(self, key, value):
        self.writes[key] = value

    def del_state(self, key):
        self.writes[key] = None

    def get_state_range(self, start, end):
        s, e = start.encode(), end.encode()
        return sorted(((k, v) for k, v in self.state.items() if s <= k.encode() < e), key=lambda kv: kv[0].encode())


def serial_replay(blocks) -> dict[str, bytes]:
    contract = AssetContract()
    state: dict[str, bytes] = {}
    prev_time = blocks[0].timestamp
    for block in blocks[1:]:
        for tx, flag in zip(block.transactions, block.validation_flags):
            if flag is not ValidationFlag.VALID:
                continue
            stub = DictStub(state, tx.tx_id, tx.creator, prev_time)
            contract.invoke(stub, tx.function, list(tx.args))
            for k, v in stub.writes.items():
                if v is None:
                    state.pop(k, None)
                else:
                    state[k] = v
        prev_time = block.timestamp
    return state


@pytest.mark.criterion(1, "pipeline serializability over 1000 conflicting transactions (< 30 s)")
def test_serializability(manual_fx):
    fx = manual_fx
    start = time.perf_counter()
    admin = fx.gw(fx.admin)
    fut = admin.submit_async("grant", "alice", "sensor-1", "read,write")
    fx.net.orderer.cut(CHANNEL)
    assert fut.result(5).valid

    rng = random.Random(2024)
    pool = [new_uuid(rng) for _ in range(12)]
    writers = [fx.gw(fx.device), fx.gw(fx.alice)]
    total = rejected = 0
    while total < 1000:
        # a wave endorsed against the same committed state, then ordered together
        wave = []
        for _ in range(min(rng.randint(1, 25), 1000 - total)):
            total += 1
            if rng.random() < 0.04:
                gw, fn, args = admin, "grant", ("alice", "sensor-1", rng.choice(["read,write", "write"]))
            else:
                gw = rng.choice(writers)
                fn, args = "store_asset", (rng.choice(pool), "sensor-1", "temperature", rng.randbytes(6), total)
            try:
                wave.append(gw.endorse(gw.proposal(fn, *args))[0])
            except ChaincodeError:
                rejected += 1
        for tx in wave:
            fx.net.orderer.submit(tx)
        fx.net.orderer.cut(CHANNEL)

    channel = fx.net.channel(CHANNEL)
    flags = [f for b in channel.blocks[1:] for f in b.validation_flags]
    assert flags.count(ValidationFlag.MVCC_CONFLICT) > 50, "workload was not conflicting enough"
    committed = {k: v for k, v, _ in channel.snapshot_items()}
    assert serial_replay(channel.blocks) == committed
    assert time.perf_counter() - start < 30


# -- 2 ---------------------------------------------------------------------------


@pytest.mark.criterion(2, "every tampered block of a 100-block chain is reported by 'ledger verify'")
def test_tamper_detection(tmp_path, capsys):
    home = tmp_path / "ws"
    ws = Workspace(home)
    net = ws.create(three_org_topology(), seed=5)
    admin = net.enroll("iot-admin", "IoT", Role.ADMIN)
    device = net.enroll("sensor-1", "IoT", Role.DEVICE)
    ws.save_identities(net)
    ws.create_channel(net, CHANNEL, ["Org1", "Org2", "IoT"], None)

    def one(gw, fn, *args):
        fut = gw.submit_async(fn, *args)
        net.orderer.cut(CHANNEL)
        assert fut.result(5).valid

    one(net.gateway(admin, CHANNEL), "register_device", "sensor-1", b64(device.keys.public_key), "[]")
    rng = random.Random(8)
    dgw = net.gateway(device, CHANNEL)
    for i in range(98):
        one(dgw, "store_asset", new_uuid(rng), "sensor-1", "humidity", rng.randbytes(16), i)
    ws.persist_blocks(net, CHANNEL)
    assert block_numbers(ws.blocks_root, CHANNEL) == list(range(100))
    assert main(["--home", str(home), "ledger", "verify", CHANNEL]) == 0

    corrupt = ERROR_CODES["CorruptLedger"][0]
    missed = []
    for n in range(100):
        path = block_path(ws.blocks_root, CHANNEL, n)
        original = path.read_bytes()
        raw = bytearray(original)
        raw[rng.randrange(len(raw))] ^= 1 << rng.randrange(8)
        path.write_bytes(bytes(raw))
        capsys.readouterr()
        code = main(["--home", str(home), "ledger", "verify", CHANNEL])
        err = capsys.readouterr().err
        if code != corrupt or f"block {n} " not in err:
            missed.append(n)
        path.write_bytes(original)
    assert missed == []


# -- 3 ---------------------------------------------------------------------------


def _synthetic_tx(writes, n):
    nonce = n.to_bytes(16, "big")
    return Transaction(
        tx_id=digest_of(proposal_fields("eq", "t", "put", (), None, nonce)),
        channel_id="eq", chaincode_id="t", function="put", args=(), creator=None, nonce=nonce,
        rw_set=ReadWriteSet(writes=tuple(KVWrite(k, v) for k, v in sorted(writes.items()))),
        endorsements=(), client_signature=b"",
    )


@pytest.mark.criterion(3, "embedded-kv and document-store agree with a shadow map (500 ops, 200 gets, 50 ranges)")
def test_backend_equivalence(tmp_path):
    rng = random.Random(33)
    keys = [f"asset/{c}" for c in "abcdefghij"] + ["dev/é", "dev/z", "pol/x/y", "ver/a/1", "a", "é/ü"]
    shadow = ShadowMap()
    blocks = [genesis_block("eq", ["Org1"], 0)]
    n = 0
    for number in range(1, 101):
        writes = {}
        for _ in range(5):  # 500 ops over 100 blocks
            n += 1
            k = rng.choice(keys)
            writes[k] = None if rng.random() < 0.25 else json.dumps({"n": n}).encode()
        for k, v in writes.items():
            shadow.delete(k) if v is None else shadow.put(k, v)
        raw = Block.build(number, blocks[-1].hash, number, (_synthetic_tx(writes, n),))
        blocks.append(raw.with_flags((ValidationFlag.VALID,), blocks[-1].commit_hash))
    kv = Channel.from_blocks(blocks, "embedded-kv")
    doc = Channel.from_blocks(blocks, "document-store")
    for _ in range(200):
        k = rng.choice(keys + ["missing"])
        a, b = kv.state_get(k), doc.state_get(k)
        assert a == b
        assert (a[0] if a else None) == shadow.get(k)
    probes = sorted(keys + ["", "asset/", "asset0", "zz", "￿"], key=str.encode)
    for _ in range(50):
        lo, hi = sorted(rng.sample(probes, 2), key=str.encode)
        a, b = kv.range_query(lo, hi), doc.range_query(lo, hi)
        assert a == b
        assert [(k, v) for k, v, _ in a] == shadow.range(lo, hi)
    export_blocks(tmp_path, "eq", blocks)
    assert replay_state(read_block_files(tmp_path / "eq")) == shadow.d == {k: v for k, v, _ in kv.snapshot_items()}


# -- 4 ---------------------------------------------------------------------------


@pytest.mark.criterion(4, "check_policy equals boolean-tree evaluation: 1000 trees x 16 subsets")
def test_policy_oracle():
    orgs = ["Org1", "Org2", "IoT", "Org4"]
    msp = MspRegistry()
    endorsement = {}
    for o in orgs:
        ca = CertificateAuthority(f"{o}-CA", o, msp, KeyPair.generate(random.Random(o)))
        ident = ca.enroll(f"peer@{o}", Role.PEER, 0, 10**12)
        endorsement[o] = Endorsement(ident.cert, "ab" * 32, b"", ident.sign(b"x"))
    subsets = [frozenset(c) for r in range(5) for c in itertools.combinations(orgs, r)]
    assert len(subsets) == 16
    rng = random.Random(4)
    mismatches = 0
    for _ in range(1000):
        tree = random_tree(rng, orgs, depth=4)
        policy = parse_policy(tree_text(tree))
        for s in subsets:
            mismatches += check_policy(policy, [endorsement[o] for o in sorted(s)]) != tree_eval(tree, s)
    assert mismatches == 0


# -- 5 ---------------------------------------------------------------------------


@pytest.mark.criterion(5, "one-time password: 100 trials x 8 concurrent verifies, exactly one success each")
def test_one_time_password(fx):
    gateways = [fx.gw(fx.device) for _ in range(8)]
    bad_trials = []
    for trial in range(100):
        cid, sig = signed_challenge(fx, fx.device, 1_000 * trial)
        barrier = threading.Barrier(8)
        outcomes = [None] * 8

        def attempt(i):
            barrier.wait()
            try:
                res = gateways[i].submit("verify_challenge", cid, sig, 1_000 * trial + 10, timeout_s=10)
                outcomes[i] = res.flag.value
            except ChaincodeError as exc:
                outcomes[i] = exc.code

        threads = [threading.Thread(target=attempt, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if outcomes.count("Valid") != 1 or not set(outcomes) <= {"Valid", "MvccConflict", "AlreadyUsed"}:
            bad_trials.append((trial, outcomes))
    assert bad_trials == []


# -- 6 ---------------------------------------------------------------------------


@pytest.mark.criterion(6, "QoS 1 no loss and QoS 2 exactly-once in order under drop/dup/reorder faults (< 60 s)")
def test_qos_under_faults():
    start = time.perf_counter()
    rights = {"pub": pub_rights("#"), **{f"s{i}": sub_rights("q1/#", "q2/#") for i in range(4)}}
    net = sim_broker(rights, FaultConfig(drop=0.3, duplicate=0.1, reorder=0.1), seed=66)
    subs1 = [sim_connect(net, f"s{i}") for i in (0, 1)]
    subs2 = [sim_connect(net, f"s{i}") for i in (2, 3)]
    for link, flt, q in [(s, "q1/#", 1) for s in subs1] + [(s, "q2/#", 2) for s in subs2]:
        pid = link.subscribe([(flt, q)])
        net.run(until=lambda link=link, pid=pid: pid in link.client.subacks, max_ticks=1000)
    pub = sim_connect(net, "pub")
    sent = [f"msg-{i:04d}".encode() for i in range(1000)]
    for body in sent:
        pub.publish("q1/line", body, 1)
        pub.publish("q2/line", body, 2)
    net.run(max_ticks=500_000)
    assert net.frames_dropped > 0 and net.frames_duplicated > 0
    for s in subs1:
        got = [m.payload for m in s.client.received]
        assert set(got) == set(sent), f"{len(set(sent) - set(got))} QoS 1 messages missed"
    for s in subs2:
        assert [m.payload for m in s.client.received] == sent
    assert time.perf_counter() - start < 60


# -- 7 ---------------------------------------------------------------------------


@pytest.mark.criterion(7, "late subscriber gets the last retained message; persistent session gets 100 missed messages in order")
def test_retained_and_persistent_sessions():
    rights = {"pub": pub_rights("plant/#"), "late": sub_rights("plant/#"), "keeper": sub_rights("plant/#")}
    net = sim_broker(rights)
    keeper = sim_connect(net, "keeper", clean=False)
    keeper.subscribe([("plant/+/temperature", 1)])
    net.run()
    pub = sim_connect(net, "pub")
    for reading in (b"20.0", b"20.5", b"21.0"):
        pub.publish("plant/s1/temperature", reading, 1, retain=True)
    net.run()
    late = sim_connect(net, "late")
    late.subscribe([("plant/#", 1)])
    net.run()
    assert [(m.payload, m.retain) for m in late.client.received] == [(b"21.0", True)]

    keeper.disconnect()
    net.run()
    missed = [f"t{i}".encode() for i in range(100)]
    for body in missed:
        pub.publish("plant/s1/temperature", body, 1)
    net.run()
    before = len(keeper.client.received)
    back = sim_connect(net, "keeper", clean=False, client=keeper.client)
    net.run()
    assert back.client.session_present is True
    assert [m.payload for m in back.client.received[before:]] == missed


# -- 8 ---------------------------------------------------------------------------


@pytest.mark.criterion(8, "chaincode queries agree with a replay oracle over exported blocks (20 assets, 60 updates)")
def test_chaincode_catalogue(fx, tmp_path):
    rng = random.Random(88)
    kinds = ["temperature", "humidity", "gas", "pressure"]
    ids = [new_uuid(rng) for _ in range(20)]
    dev = fx.gw(fx.device)
    for i, aid in enumerate(ids):
        assert dev.submit("store_asset", aid, "sensor-1", kinds[i % 4], rng.randbytes(12), rng.randrange(10**6)).valid
    for _ in range(60):
        aid = rng.choice(ids)
        kind = kinds[ids.index(aid) % 4]
        assert dev.submit("store_asset", aid, "sensor-1", kind, rng.randbytes(12), rng.randrange(10**6)).valid

    export_blocks(tmp_path, CHANNEL, fx.net.channel(CHANNEL).blocks)
    timeline = asset_timeline(read_block_files(tmp_path / CHANNEL))
    assert sorted(timeline) == sorted(ids) and sum(map(len, timeline.values())) == 80
    latest = {a: entries[-1][1] for a, entries in timeline.items()}

    alice = fx.gw(fx.alice)

    def q(fn, *args):
        return json.loads(alice.evaluate(fn, *args))

    for aid, entries in timeline.items():
        payload = base64.b64decode(latest[aid]["payload"])
        assert q("query_checksum", aid) == sha256_hex(payload) == latest[aid]["checksum"]
        lineage = q("get_lineage", aid)
        assert [(e["version"], e["tx_id"], e["checksum"], e["timestamp"]) for e in lineage] == [
            (v, tx, rec["checksum"], rec["timestamp"]) for v, (tx, rec) in enumerate(entries, start=1)
        ]
        history = q("get_history", aid)
        assert [(h["tx_id"], h["value"]) for h in history] == entries
        for v, (tx_id, rec) in enumerate(entries, start=1):
            assert q("get_asset_by_txid", tx_id) == rec
            assert q("get_version_by_txid", tx_id) == v
            assert q("get_asset_version", aid, v) == rec

    ordered = sorted(ids, key=str.encode)
    for _ in range(10):
        lo, hi = sorted(rng.sample(ordered, 2), key=str.encode)
        expect = [latest[a] for a in ordered if lo.encode() <= a.encode() < hi.encode()]
        assert q("key_range_query", lo, hi) == expect

    info = q("get_sensor_info", "sensor-1")
    newest = {}
    for a, rec in latest.items():
        cur = newest.get(rec["sensor_type"])
        if cur is None or (rec["timestamp"], a) > (cur["timestamp"], cur["asset_id"]):
            newest[rec["sensor_type"]] = rec
    assert info["latest"] == newest

    for _ in range(5):
        batch = rng.sample(ids, 7) + [new_uuid(rng)]
        rng.shuffle(batch)
        assert q("get_assets_from_batch", *batch) == [latest.get(a) for a in batch]


# -- 9 ---------------------------------------------------------------------------


@pytest.mark.criterion(9, "benchmark: avg latency non-decreasing over batch 1/10/20/50 at 50 TPS within noise (< 5 min)")
def test_benchmark_trend():
    start = time.perf_counter()
    cfg = default_config(tx_count=100, repeats=5)
    with BenchRunner(cfg) as runner:
        report = runner.run()
    assert report.chain_intact is True
    by_batch: dict[int, list[float]] = {}
    for rnd, m in zip(cfg.rounds, report.rounds):
        assert m.committed == m.submitted == 100, m
        assert m.latency_min <= m.latency_avg <= m.latency_p95 <= m.latency_max, m
        assert m.throughput <= m.send_rate_actual + 1e-9, m
        by_batch.setdefault(rnd.batch_size, []).append(m.latency_avg)
    sizes = sorted(by_batch)
    assert sizes == [1, 10, 20, 50]
    med = {b: statistics.median(v) for b, v in by_batch.items()}
    noise = percentile([abs(x - med[b]) for b, v in by_batch.items() for x in v], 95)
    for a, b in zip(sizes, sizes[1:]):
        assert med[b] >= med[a] - noise, (med, noise)
    assert med[50] >= med[1]
    assert time.perf_counter() - start < 300


# -- 10 --------------------------------------------------------------------------


@pytest.mark.criterion(10, "end-to-end: challenge login, 50 bridged readings delivered and stored, replays refused")
def test_end_to_end(fx):
    admin = fx.gw(fx.admin)
    topic = "plant/sensor-1/temperature"
    assert admin.submit("grant", "alice", "plant/+/temperature", "subscribe").valid
    broker, bridge = ledger_broker(fx)
    try:
        with TcpBrokerServer(broker) as server:
            sub_cred = signed_challenge(fx, fx.alice, now_ms())
            sub = TcpClient("alice", server.address)
            sub.connect(*sub_cred)
            assert sub.subscribe([("plant/+/temperature", 1)]) == (1,)
            dev_cred = signed_challenge(fx, fx.device, now_ms())
            dev = TcpClient("sensor-1", server.address)
            dev.connect(*dev_cred)
            readings = [f"{18 + i * 0.1:.1f}C".encode() for i in range(50)]
            for r in readings:
                dev.publish(topic, r, 1)
            assert dev.flush(30)
            got = sub.wait_for(50, timeout=30)
            assert [m.payload for m in got] == readings
            records = bridge.drain()
            dev.disconnect()
            sub.disconnect()
            for client_id, cred in (("alice", sub_cred), ("sensor-1", dev_cred)):
                with pytest.raises(AuthFailure) as err:
                    TcpClient(client_id, server.address).connect(*cred)
                assert err.value.code == "AlreadyUsed"
    finally:
        bridge.close()
    assert len(records) == 50 and all(r.result and r.result.valid for r in records)
    state = fx.net.channel(CHANNEL)
    stored = [json.loads(v) for k, v, _ in state.snapshot_items() if k.startswith("asset/")]
    assert len(stored) == 50
    assert sorted(a["checksum"] for a in stored) == sorted(sha256_hex(r) for r in readings)
