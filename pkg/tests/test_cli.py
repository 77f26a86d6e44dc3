import base64
import json
import subprocess
import sys
from pathlib import Path

import pytest

from iotledger.bench.config import BenchmarkConfig
from iotledger.broker import AuthFailure, TcpClient
from iotledger.cli import ERROR_CODES, main
from iotledger.topology import NetworkConfig, three_org_topology

from oracles import sha256_hex

EXIT = {name: code for name, (code, _) in ERROR_CODES.items()}
AID = "1b4e28ba-2fa1-4d3b-a3f5-ef19b5a7633b"


@pytest.fixture
def home(tmp_path):
    return str(tmp_path / "ws")


def run(capsys, home, *argv):
    code = main(["--home", home, *argv])
    out, err = capsys.readouterr()
    return code, out, err


def ok(capsys, home, *argv):
    code, out, err = run(capsys, home, *argv)
    assert code == 0, err
    try:
        return json.loads(out)
    except ValueError:
        return out


def bootstrap(capsys, home):
    up = ok(capsys, home, "network", "up", "--seed", "3")
    ok(capsys, home, "identity", "enroll", "iot-admin", "--org", "IoT", "--role", "admin")
    dev = ok(capsys, home, "identity", "enroll", "sensor-1", "--org", "IoT", "--role", "device")
    ok(capsys, home, "channel", "create", "iotchannel")
    ok(capsys, home, "chaincode", "deploy", "iotchannel")
    cert = json.loads(open(dev["certificate"]).read())
    ok(capsys, home, "chaincode", "invoke", "iotchannel", "register_device", "sensor-1",
       cert["public_key"], "--as", "iot-admin")
    return up


def test_network_up_writes_roster(capsys, home, tmp_path):
    up = ok(capsys, home, "network", "up")
    roster = [n.name for n in three_org_topology().roster()]
    assert up["certificates"] == roster and len(roster) == 12
    certs = sorted(p.name for p in (tmp_path / "ws" / "certs").iterdir())
    assert certs == sorted(f"{n}.cert.json" for n in roster)
    code, _, err = run(capsys, home, "network", "up")
    assert code == EXIT["NetworkExists"] and err.startswith("ERROR NetworkExists:")
    ok(capsys, home, "network", "down")
    again = ok(capsys, home, "network", "up")
    assert again["certificates"] == roster


def test_invoke_query_and_verify(capsys, home, tmp_path):
    bootstrap(capsys, home)
    payload = b"21.5"
    res = ok(capsys, home, "chaincode", "invoke", "iotchannel", "store_asset", AID, "sensor-1",
             "temperature", payload.decode(), "1000", "--as", "sensor-1")
    assert res["flag"] == "Valid" and res["result"]["version"] == 1
    assert ok(capsys, home, "chaincode", "query", "iotchannel", "query_checksum", AID,
              "--as", "iot-admin") == sha256_hex(payload)
    b64 = [base64.b64encode(a.encode()).decode() for a in (AID, "sensor-1", "temperature", "22.0", "2000")]
    res = ok(capsys, home, "chaincode", "invoke", "iotchannel", "store_asset", *b64, "--b64", "--as", "sensor-1")
    assert res["result"]["version"] == 2
    out = ok(capsys, home, "ledger", "verify", "iotchannel")
    assert "verified" in out

    export = tmp_path / "exp"
    ok(capsys, home, "ledger", "export", "iotchannel", "--dir", str(export))
    files = sorted((export / "iotchannel").iterdir())
    assert len(files) == 4  # genesis, register, two stores

    block = tmp_path / "ws" / "channels" / "iotchannel" / "block_2.json"
    raw = bytearray(block.read_bytes())
    raw[len(raw) // 2] ^= 0x01
    block.write_bytes(bytes(raw))
    code, _, err = run(capsys, home, "ledger", "verify", "iotchannel")
    assert code == EXIT["CorruptLedger"] and "block 2" in err

    ok(capsys, home, "ledger", "import", "iotchannel", "--dir", str(export))
    ok(capsys, home, "ledger", "verify", "iotchannel")


def test_error_codes(capsys, home):
    code, _, err = run(capsys, home, "channel", "create", "x")
    assert code == EXIT["NoNetwork"] and err.startswith("ERROR NoNetwork:")
    bootstrap(capsys, home)
    cases = [
        (("channel", "create", "iotchannel"), "ChannelExists"),
        (("chaincode", "query", "nochan", "query_checksum", AID, "--as", "iot-admin"), "UnknownChannel"),
        (("chaincode", "query", "iotchannel", "query_checksum", AID, "--as", "ghost"), "UnknownIdentity"),
        (("chaincode", "query", "iotchannel", "query_checksum", AID, "--as", "iot-admin"), "Chaincode"),
        (("identity", "enroll", "iot-admin", "--org", "IoT"), "Identity"),
        (("channel", "create", "other", "--policy", "AND("), "Config"),
    ]
    for argv, name in cases:
        code, out, err = run(capsys, home, *argv)
        assert code == EXIT[name], (argv, err)
        assert err.startswith(f"ERROR {name}:") and err.count("\n") == 1
    ok(capsys, home, "channel", "create", "fresh")
    code, _, err = run(capsys, home, "chaincode", "query", "fresh", "query_checksum", AID, "--as", "iot-admin")
    assert code == EXIT["NotDeployed"]


def test_help_lists_distinct_codes():
    out = subprocess.run([sys.executable, "-m", "iotledger", "--help"], capture_output=True, text=True, check=True).stdout
    assert len(set(EXIT.values())) == len(EXIT)
    assert not {0, 1, 2} & set(EXIT.values())
    for name, code in EXIT.items():
        assert f"{code}" in out and name in out


def test_bench_run_cli(capsys, home, tmp_path):
    cfg = {
        "rounds": [{"label": "tiny", "tx_count": 5, "send_rate_tps": 50, "batch_size": 2, "asset_pool": 10}],
        "asset_bytes": 32,
        "batch_timeout_ms": 20,
    }
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(cfg))
    report = tmp_path / "report.json"
    code, out, err = run(capsys, home, "bench", "run", "--config", str(path), "--report", str(report))
    assert code == 0, err
    assert "| Label" in out
    data = json.loads(report.read_text())
    assert data["rounds"][0]["submitted"] == 5 and data["chain_intact"] is True
    path.write_text(json.dumps({**cfg, "mystery": 1}))
    code, _, err = run(capsys, home, "bench", "run", "--config", str(path))
    assert code == EXIT["Config"] and "mystery" in err


def test_broker_serve_cli(capsys, home, tmp_path):
    bootstrap(capsys, home)
    ok(capsys, home, "identity", "enroll", "broker", "--org", "IoT")
    cfg = tmp_path / "broker.json"
    cfg.write_text(json.dumps({"identity": "broker", "port": 0, "bridge_topics": ["plant/+/temperature"]}))
    proc = subprocess.Popen(
        [sys.executable, "-m", "iotledger", "--home", home, "broker", "serve", "--config", str(cfg), "--max-seconds", "5"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    try:
        host, port = json.loads(proc.stdout.readline())["broker"].rsplit(":", 1)
        client = TcpClient("sensor-1", (host, int(port)))
        with pytest.raises(AuthFailure) as err:
            client.connect("no-such-challenge", "AAAA", timeout=10)
        assert err.value.code == "NotFound"
    finally:
        assert proc.wait(timeout=30) == 0, proc.stderr.read()


def test_shipped_configs_load():
    root = Path(__file__).resolve().parent.parent / "configs"
    bench = BenchmarkConfig.load(root / "bench_default.json")
    assert {r.batch_size for r in bench.rounds} == {1, 10, 20, 50}
    assert {(r.send_rate_tps, r.asset_pool) for r in bench.rounds} == {(50, 500)}
    assert NetworkConfig.from_dict(json.loads((root / "three_org_network.json").read_text())) == three_org_topology()
    broker = json.loads((root / "broker.json").read_text())
    assert set(broker) == {"identity", "channel", "host", "port", "bridge_topics", "retry_ms", "seed"}
