"""Declarative benchmark configuration (JSON on disk)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

from ..ledger.state import Backend

WORKLOAD_FUNCTIONS = ("get_assets_from_batch", "store_asset", "query_checksum")


class BenchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Round:
    label: str
    function: str = "get_assets_from_batch"
    tx_count: int = 100
    send_rate_tps: int = 50
    batch_size: int = 1
    asset_pool: int = 500

    def __post_init__(self) -> None:
        if self.function not in WORKLOAD_FUNCTIONS:
            raise BenchConfigError(f"unsupported workload function {self.function!r}")
        if self.tx_count < 1 or self.send_rate_tps < 1 or self.batch_size < 1 or self.asset_pool < 1:
            raise BenchConfigError(f"round {self.label!r}: counts and rates must be >= 1")
        if self.batch_size > self.asset_pool:
            raise BenchConfigError(f"round {self.label!r}: batch_size exceeds asset_pool")


@dataclass(frozen=True)
class BenchmarkConfig:
    rounds: tuple[Round, ...]
    workers: int = 2
    seed: int = 42
    state_db: str = Backend.EMBEDDED_KV.value
    report_path: str | None = None
    asset_bytes: int = 1024
    max_block_txs: int = 10
    batch_timeout_ms: int = 500
    commit_timeout_s: float = 30.0

    def __post_init__(self) -> None:
        if not self.rounds:
            raise BenchConfigError("at least one round is required")
        if self.workers < 1:
            raise BenchConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise BenchConfigError("seed must fit in 64 bits")
        try:
            Backend(self.state_db)
        except ValueError:
            raise BenchConfigError(f"unknown state_db {self.state_db!r}") from None
        if self.asset_bytes < 1:
            raise BenchConfigError("asset_bytes must be >= 1")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BenchmarkConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "rounds"}
        try:
            rounds = tuple(Round(**r) for r in d["rounds"])
        except (KeyError, TypeError) as exc:
            raise BenchConfigError(f"malformed rounds: {exc}") from None
        unknown = set(d) - known - {"rounds"}
        if unknown:
            raise BenchConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(rounds=rounds, **{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise BenchConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["rounds"] = [asdict(r) for r in self.rounds]
        return d


def default_config(tx_count: int = 100, repeats: int = 1) -> BenchmarkConfig:
    """Pool of 500 assets, batch sizes 1/10/20/50 at a fixed 50 TPS."""
    rounds = tuple(
        Round(label=f"batch-{b}" + (f"-r{k}" if repeats > 1 else ""), tx_count=tx_count, batch_size=b)
        for k in range(repeats)
        for b in (1, 10, 20, 50)
    )
    return BenchmarkConfig(rounds=rounds)
