"""Operator command line.

Every failure prints one line ``ERROR <CODE>: <message>`` to stderr and
exits with the status listed in ``iotledger --help``.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Callable, Sequence

from .bench import BenchConfigError, BenchmarkConfig, BenchmarkError, BenchRunner, render_report
from .broker import Broker, BrokerConfig, LedgerAuthenticator, LedgerBridge, TcpBrokerServer
from .encoding import unb64
from .identity import DuplicateSubject, IdentityError, Role
from .ledger.export import CorruptBlockFile, block_numbers, export_blocks, load_blocks, verify_exported
from .network import Network
from .topology import ConfigError, NetworkConfig, three_org_topology
from .txflow.gateway import EndorsementMismatch, Timeout
from .txflow.orderer import OrdererUnavailable
from .txflow.policy import PolicyError
from .txflow.simulate import ChaincodeError
from .workspace import DEFAULT_HOME, Workspace, WorkspaceError

log = logging.getLogger("iotledger")

# code -> (exit status, meaning); argparse itself exits 2 on usage errors
ERROR_CODES: dict[str, tuple[int, str]] = {
    "Config": (3, "malformed or inconsistent config file"),
    "NoNetwork": (4, "no network in the home directory"),
    "NetworkExists": (5, "network already up in the home directory"),
    "UnknownChannel": (6, "channel not created"),
    "ChannelExists": (7, "channel already created"),
    "NotDeployed": (8, "chaincode not deployed on the channel"),
    "UnknownIdentity": (9, "no enrolled identity with that subject"),
    "Identity": (10, "enrollment refused (duplicate subject, bad role or org)"),
    "Chaincode": (11, "the contract rejected the invocation"),
    "TxInvalid": (12, "transaction committed with a non-Valid flag"),
    "CorruptLedger": (13, "block files fail verification"),
    "Timeout": (14, "no commit within the timeout"),
    "IO": (15, "file missing or unreadable"),
    "Benchmark": (16, "benchmark aborted"),
    "Internal": (70, "unexpected internal error"),
}


class CliError(Exception):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message

    @property
    def status(self) -> int:
        return ERROR_CODES[self.code][0]


def _ws(args) -> Workspace:
    return Workspace(args.home)


def _load(args) -> tuple[Workspace, Network]:
    ws = _ws(args)
    try:
        return ws, ws.load()
    except CorruptBlockFile as exc:
        raise CliError("CorruptLedger", str(exc)) from None
    except WorkspaceError as exc:
        raise CliError("NoNetwork", str(exc)) from None


def _identity(net: Network, subject: str):
    ident = net.identities.get(subject)
    if ident is None:
        raise CliError("UnknownIdentity", subject)
    return ident


def _channel(ws: Workspace, channel_id: str) -> dict:
    try:
        return ws.channel_meta(channel_id)
    except WorkspaceError as exc:
        raise CliError("UnknownChannel", str(exc)) from None


def _out(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- network / identity / channel --------------------------------------------


def cmd_network_up(args) -> int:
    ws = _ws(args)
    if ws.exists:
        raise CliError("NetworkExists", f"{ws.home} already holds a network; run 'network down' first")
    config = NetworkConfig.load(args.config) if args.config else three_org_topology()
    net = ws.create(config, args.state_db, args.seed)
    roster = [n.name for n in config.roster()]
    _out({"home": str(ws.home), "certificates": roster})
    if args.foreground:
        _serve_until_interrupted(ws, net, args.max_seconds)
    return 0


def cmd_network_down(args) -> int:
    ws = _ws(args)
    if not ws.exists:
        raise CliError("NoNetwork", f"no network in {ws.home}")
    ws.destroy()
    print(f"removed {ws.home}")
    return 0


def cmd_identity_enroll(args) -> int:
    ws, net = _load(args)
    try:
        ident = net.enroll(args.subject, args.org, args.role)
    except (DuplicateSubject, IdentityError, ConfigError, ValueError) as exc:
        raise CliError("Identity", str(exc)) from None
    ws.save_identities(net)
    _out({"subject": ident.subject, "org": ident.org, "role": ident.cert.role.value,
          "certificate": str(ws.cert_path(ident.subject))})
    return 0


def cmd_channel_create(args) -> int:
    ws, net = _load(args)
    if args.channel in ws.channel_ids():
        raise CliError("ChannelExists", args.channel)
    spec = next((c for c in net.config.channels if c.id == args.channel), None)
    members = args.members.split(",") if args.members else (
        list(spec.members) if spec else [o.name for o in net.config.orgs]
    )
    policy = args.policy or (spec.endorsement_policy if spec else None)
    try:
        genesis = ws.create_channel(net, args.channel, members, policy)
    except (ConfigError, PolicyError, ValueError) as exc:
        raise CliError("Config", str(exc)) from None
    _out({"channel": args.channel, "members": members, "policy": str(net.policies[args.channel]),
          "genesis_hash": genesis.hash})
    return 0


# -- chaincode ----------------------------------------------------------------


def cmd_chaincode_deploy(args) -> int:
    ws, net = _load(args)
    meta = _channel(ws, args.channel)
    meta["deployed"] = True
    meta["chaincode"] = net.chaincode_id
    ws.save_channel_meta(args.channel, meta)
    _out({"channel": args.channel, "chaincode": net.chaincode_id, "functions": net.contract.functions})
    return 0


def _decode_args(args) -> list[bytes | str]:
    if not args.b64:
        return list(args.args)
    try:
        return [unb64(a) for a in args.args]
    except ValueError as exc:
        raise CliError("Config", f"--b64 argument: {exc}") from None


def _gateway(args):
    ws, net = _load(args)
    meta = _channel(ws, args.channel)
    if not meta.get("deployed"):
        raise CliError("NotDeployed", f"run 'chaincode deploy {args.channel}' first")
    return ws, net, net.gateway(_identity(net, args.as_), args.channel)


def _payload(raw: bytes):
    try:
        return json.loads(raw)
    except ValueError:
        return raw.decode("utf-8", "replace")


def cmd_chaincode_invoke(args) -> int:
    ws, net, gw = _gateway(args)
    try:
        fut = gw.submit_async(args.function, *_decode_args(args))
    except ChaincodeError as exc:
        raise CliError("Chaincode", f"{exc.code}: {exc.message}") from None
    except EndorsementMismatch as exc:
        raise CliError("TxInvalid", str(exc)) from None
    net.orderer.cut(args.channel)
    try:
        res = fut.result(timeout=args.timeout)
    except Exception:
        raise CliError("Timeout", f"no commit for {fut.tx_id}") from None
    ws.persist_blocks(net, args.channel)
    if not res.valid:
        raise CliError("TxInvalid", f"{res.tx_id} committed in block {res.block_number} as {res.flag.value}")
    _out({"tx_id": res.tx_id, "block": res.block_number, "flag": res.flag.value, "result": _payload(res.payload)})
    return 0


def cmd_chaincode_query(args) -> int:
    _, _, gw = _gateway(args)
    try:
        raw = gw.evaluate(args.function, *_decode_args(args))
    except ChaincodeError as exc:
        raise CliError("Chaincode", f"{exc.code}: {exc.message}") from None
    _out(_payload(raw))
    return 0


# -- ledger -------------------------------------------------------------------


def cmd_ledger_verify(args) -> int:
    ws = _ws(args)
    _channel(ws, args.channel)
    try:
        broken = verify_exported(ws.blocks_root, args.channel)
    except FileNotFoundError as exc:
        raise CliError("IO", str(exc)) from None
    if broken is not None:
        raise CliError("CorruptLedger", f"channel {args.channel}: block {broken} fails verification")
    print(f"channel {args.channel}: {len(block_numbers(ws.blocks_root, args.channel))} blocks verified")
    return 0


def cmd_ledger_export(args) -> int:
    ws = _ws(args)
    _channel(ws, args.channel)
    try:
        blocks = load_blocks(ws.blocks_root, args.channel)
    except CorruptBlockFile as exc:
        raise CliError("CorruptLedger", str(exc)) from None
    paths = export_blocks(Path(args.dir), args.channel, blocks)
    print(f"exported {len(paths)} blocks to {Path(args.dir) / args.channel}")
    return 0


def cmd_ledger_import(args) -> int:
    """Copies block files verbatim; run 'ledger verify' afterwards."""
    ws = _ws(args)
    _channel(ws, args.channel)
    src = Path(args.dir) / args.channel
    nums = block_numbers(Path(args.dir), args.channel)
    if not nums:
        raise CliError("IO", f"no block files under {src}")
    dst = ws.channel_dir(args.channel)
    for old in block_numbers(ws.blocks_root, args.channel):
        (dst / f"block_{old}.json").unlink()
    for n in nums:
        shutil.copyfile(src / f"block_{n}.json", dst / f"block_{n}.json")
    print(f"imported {len(nums)} block files into {dst}")
    return 0


# -- long-running services ------------------------------------------------------


def _wait(max_seconds: float | None, stop: threading.Event) -> None:
    deadline = None if max_seconds is None else time.monotonic() + max_seconds
    while not stop.is_set():
        left = None if deadline is None else deadline - time.monotonic()
        if left is not None and left <= 0:
            return
        stop.wait(0.2 if left is None else min(0.2, left))


def _persisting(ws: Workspace, net: Network) -> Callable[[], None]:
    lock = threading.Lock()

    def flush(*_):
        with lock:
            for cid in ws.channel_ids():
                ws.persist_blocks(net, cid)

    for cid in ws.channel_ids():
        net.channel(cid)  # fail early on an unattached channel
    net.peers[0].add_commit_listener(flush)
    return flush


def _serve_until_interrupted(ws: Workspace, net: Network, max_seconds: float | None, extra=None) -> None:
    stop = threading.Event()
    previous = signal.signal(signal.SIGTERM, lambda *_: stop.set())
    flush = _persisting(ws, net)
    net.start()
    try:
        _wait(max_seconds, stop)
    except KeyboardInterrupt:
        pass
    finally:
        if extra:
            extra()
        net.stop()
        flush()
        signal.signal(signal.SIGTERM, previous)


def cmd_broker_serve(args) -> int:
    ws, net = _load(args)
    try:
        cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    except (OSError, ValueError) as exc:
        raise CliError("Config", f"{args.config}: {exc}") from None
    channel = cfg.get("channel", "iotchannel")
    if not _channel(ws, channel).get("deployed"):
        raise CliError("NotDeployed", f"run 'chaincode deploy {channel}' first")
    gw = net.gateway(_identity(net, cfg.get("identity", "broker")), channel)
    try:
        bcfg = BrokerConfig(
            retry_ms=int(cfg.get("retry_ms", 1000)),
            bridge_topics=tuple(cfg.get("bridge_topics", ())),
            session_expiry_ms=cfg.get("session_expiry_ms"),
        )
    except ValueError as exc:
        raise CliError("Config", str(exc)) from None
    bridge = LedgerBridge(gw, cfg.get("seed")) if bcfg.bridge_topics else None
    broker = Broker(LedgerAuthenticator(gw), config=bcfg, bridge=bridge)
    server = TcpBrokerServer(broker, cfg.get("host", "127.0.0.1"), int(args.port or cfg.get("port", 1883)))
    server.start()
    host, port = server.address
    print(json.dumps({"broker": f"{host}:{port}", "channel": channel}), flush=True)

    def shutdown():
        server.stop()
        if bridge is not None:
            bridge.drain()
            bridge.close()

    _serve_until_interrupted(ws, net, args.max_seconds, shutdown)
    return 0


def cmd_bench_run(args) -> int:
    try:
        config = BenchmarkConfig.load(args.config)
    except (OSError, BenchConfigError) as exc:
        raise CliError("Config", str(exc)) from None
    ws = _ws(args)
    topology = NetworkConfig.from_dict(json.loads((ws.home / "network.json").read_text())["config"]) \
        if ws.exists else None
    try:
        runner = BenchRunner(config, topology=topology)
    except BenchmarkError as exc:
        raise CliError("Benchmark", str(exc)) from None
    try:
        report = runner.run()
    except BenchmarkError as exc:
        raise CliError("Benchmark", str(exc)) from None
    finally:
        runner.close()
    sys.stdout.write(render_report(report, "text").decode())
    path = args.report or config.report_path
    if path:
        Path(path).write_bytes(render_report(report, "json"))
        print(f"report written to {path}")
    return 0


# -- parser ---------------------------------------------------------------------


def _codes_epilog() -> str:
    lines = ["exit statuses:", "  0   success", "  2   usage error"]
    lines += [f"  {status:<3} {code}: {meaning}" for code, (status, meaning) in ERROR_CODES.items()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iotledger",
        description="Permissioned IoT ledger: network, chaincode, broker and benchmarks.",
        epilog=_codes_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--home", default=DEFAULT_HOME, help="workspace directory (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="group", required=True)

    net = sub.add_parser("network").add_subparsers(dest="cmd", required=True)
    up = net.add_parser("up", help="create CAs and node certificates")
    up.add_argument("--config", help="topology JSON (default: the built-in three-org network)")
    up.add_argument("--state-db", default="embedded-kv", choices=["embedded-kv", "document-store"])
    up.add_argument("--seed", type=int)
    up.add_argument("--foreground", action="store_true", help="keep the orderer running until interrupted")
    up.add_argument("--max-seconds", type=float)
    up.set_defaults(fn=cmd_network_up)
    down = net.add_parser("down", help="remove the workspace")
    down.set_defaults(fn=cmd_network_down)

    ident = sub.add_parser("identity").add_subparsers(dest="cmd", required=True)
    enroll = ident.add_parser("enroll")
    enroll.add_argument("subject")
    enroll.add_argument("--org", required=True)
    enroll.add_argument("--role", default="client", choices=[r.value for r in Role])
    enroll.set_defaults(fn=cmd_identity_enroll)

    chan = sub.add_parser("channel").add_subparsers(dest="cmd", required=True)
    create = chan.add_parser("create")
    create.add_argument("channel")
    create.add_argument("--members", help="comma-separated orgs (default: from the topology)")
    create.add_argument("--policy", help="e.g. 'OUTOF(2,Org1,Org2,IoT)'")
    create.set_defaults(fn=cmd_channel_create)

    cc = sub.add_parser("chaincode").add_subparsers(dest="cmd", required=True)
    deploy = cc.add_parser("deploy")
    deploy.add_argument("channel")
    deploy.set_defaults(fn=cmd_chaincode_deploy)
    for name, fn in (("invoke", cmd_chaincode_invoke), ("query", cmd_chaincode_query)):
        c = cc.add_parser(name)
        c.add_argument("channel")
        c.add_argument("function")
        c.add_argument("args", nargs="*")
        c.add_argument("--as", dest="as_", required=True, metavar="SUBJECT", help="enrolled identity to act as")
        c.add_argument("--b64", action="store_true", help="arguments are base64 byte strings")
        c.add_argument("--timeout", type=float, default=30.0)
        c.set_defaults(fn=fn)

    br = sub.add_parser("broker").add_subparsers(dest="cmd", required=True)
    serve = br.add_parser("serve")
    serve.add_argument("--config", help="broker JSON: identity, channel, host, port, bridge_topics, retry_ms")
    serve.add_argument("--port", type=int)
    serve.add_argument("--max-seconds", type=float)
    serve.set_defaults(fn=cmd_broker_serve)

    bench = sub.add_parser("bench").add_subparsers(dest="cmd", required=True)
    run = bench.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--report", help="JSON report path (overrides report_path)")
    run.set_defaults(fn=cmd_bench_run)

    led = sub.add_parser("ledger").add_subparsers(dest="cmd", required=True)
    v = led.add_parser("verify")
    v.add_argument("channel")
    v.set_defaults(fn=cmd_ledger_verify)
    for name, fn in (("export", cmd_ledger_export), ("import", cmd_ledger_import)):
        c = led.add_parser(name)
        c.add_argument("channel")
        c.add_argument("--dir", required=True)
        c.set_defaults(fn=fn)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as exc:
        err = exc
    except ConfigError as exc:
        err = CliError("Config", str(exc))
    except (Timeout, OrdererUnavailable) as exc:
        err = CliError("Timeout", str(exc))
    except OSError as exc:
        err = CliError("IO", str(exc))
    except Exception as exc:  # noqa: BLE001 - last resort, still one line
        log.debug("internal error", exc_info=True)
        err = CliError("Internal", f"{type(exc).__name__}: {exc}")
    print(f"ERROR {err.code}: {err.message}", file=sys.stderr)
    return err.status


if __name__ == "__main__":
    sys.exit(main())
