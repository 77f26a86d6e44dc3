"""On-disk home for the CLI.

    <home>/network.json              topology plus backend
    <home>/cas/<org>.json            CA name, private key, next serial
    <home>/keys/<subject>.key        base64 private key
    <home>/certs/<subject>.cert.json issued certificates
    <home>/channels/<id>/channel.json members, policy, deployed flag
    <home>/channels/<id>/block_<n>.json

The network is rebuilt on every command by replaying the stored blocks.
"""

from __future__ import annotations

import json
import os
import shutil
from pathlib import Path
from typing import Any

from .encoding import b64, unb64
from .identity import Certificate, CertificateAuthority, Identity, KeyPair, MspRegistry
from .ledger.block import Block
from .ledger.export import block_numbers, load_blocks, write_block
from .ledger.state import Backend
from .network import Network
from .topology import NetworkConfig
from .txflow.peer import now_ms

DEFAULT_HOME = ".iotledger"


class WorkspaceError(Exception):
    pass


def _safe(name: str) -> str:
    if not name or "/" in name or name in (".", ".."):
        raise WorkspaceError(f"unusable name {name!r}")
    return name


def _write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


class Workspace:
    def __init__(self, home: str | Path = DEFAULT_HOME) -> None:
        self.home = Path(home)

    @property
    def exists(self) -> bool:
        return (self.home / "network.json").is_file()

    def cert_path(self, subject: str) -> Path:
        return self.home / "certs" / f"{_safe(subject)}.cert.json"

    @property
    def blocks_root(self) -> Path:
        return self.home / "channels"

    def channel_dir(self, channel_id: str) -> Path:
        return self.home / "channels" / _safe(channel_id)

    # -- network ----------------------------------------------------------

    def create(self, config: NetworkConfig, backend: str = Backend.EMBEDDED_KV.value, seed: int | None = None) -> Network:
        if self.exists:
            raise WorkspaceError(f"a network already exists in {self.home}")
        net = Network(config, backend=backend, seed=seed, create_channels=False)
        _write_json(self.home / "network.json", {"config": config.to_dict(), "backend": net.backend.value})
        self.save_identities(net)
        return net

    def save_identities(self, net: Network) -> None:
        for org, ca in net.cas.items():
            _write_json(
                self.home / "cas" / f"{_safe(org)}.json",
                {"name": ca.name, "org": org, "private_key": b64(ca.keys.private_key), "next_serial": ca.next_serial},
            )
        for subject, ident in net.identities.items():
            key = self.home / "keys" / f"{_safe(subject)}.key"
            if not key.exists():
                key.parent.mkdir(parents=True, exist_ok=True)
                key.write_text(b64(ident.keys.private_key) + "\n")
                key.chmod(0o600)
            cert = self.cert_path(subject)
            cert.parent.mkdir(parents=True, exist_ok=True)
            cert.write_text(ident.cert.to_json() + "\n")

    def load(self) -> Network:
        if not self.exists:
            raise WorkspaceError(f"no network in {self.home}; run 'network up' first")
        meta = json.loads((self.home / "network.json").read_text())
        config = NetworkConfig.from_dict(meta["config"])
        msp = MspRegistry()
        cas = {}
        for path in sorted((self.home / "cas").glob("*.json")):
            d = json.loads(path.read_text())
            cas[d["org"]] = CertificateAuthority(
                d["name"], d["org"], msp, KeyPair.from_private(unb64(d["private_key"])), d["next_serial"]
            )
        identities = {}
        for path in sorted((self.home / "certs").glob("*.cert.json")):
            cert = Certificate.from_json(path.read_text())
            key = self.home / "keys" / f"{cert.subject}.key"
            keys = KeyPair.from_private(unb64(key.read_text().strip()))
            if keys.public_key != cert.public_key:
                raise WorkspaceError(f"key for {cert.subject} does not match its certificate")
            msp.register(cert, now_ms())
            identities[cert.subject] = Identity(cert, keys)
        net = Network(
            config,
            backend=meta["backend"],
            cas=cas,
            identities=identities,
            msp=msp,
            create_channels=False,
        )
        for channel_id in self.channel_ids():
            info = self.channel_meta(channel_id)
            net.restore_channel(load_blocks(self.blocks_root, channel_id), info["policy"])
        return net

    def destroy(self) -> None:
        if self.home.exists():
            shutil.rmtree(self.home)

    # -- channels ---------------------------------------------------------

    def channel_ids(self) -> list[str]:
        root = self.home / "channels"
        if not root.is_dir():
            return []
        return sorted(p.name for p in root.iterdir() if (p / "channel.json").is_file())

    def channel_meta(self, channel_id: str) -> dict[str, Any]:
        path = self.channel_dir(channel_id) / "channel.json"
        if not path.is_file():
            raise WorkspaceError(f"unknown channel {channel_id!r}")
        return json.loads(path.read_text())

    def save_channel_meta(self, channel_id: str, meta: dict[str, Any]) -> None:
        _write_json(self.channel_dir(channel_id) / "channel.json", meta)

    def create_channel(self, net: Network, channel_id: str, members: list[str], policy: str | None) -> Block:
        if (self.channel_dir(channel_id) / "channel.json").exists():
            raise WorkspaceError(f"channel {channel_id!r} already exists")
        genesis = net.create_channel(channel_id, members, policy)
        write_block(self.blocks_root, channel_id, genesis)
        self.save_channel_meta(
            channel_id,
            {"id": channel_id, "members": members, "policy": str(net.policies[channel_id]), "deployed": False},
        )
        return genesis

    def persist_blocks(self, net: Network, channel_id: str) -> int:
        """Write committed blocks not yet on disk; returns how many."""
        on_disk = len(block_numbers(self.blocks_root, channel_id))
        blocks = net.channel(channel_id).blocks
        for block in blocks[on_disk:]:
            write_block(self.blocks_root, channel_id, block)
        return len(blocks) - on_disk
