"""Round metrics, their aggregation, and JSON / text-table rendering."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

METRIC_FIELDS = (
    "label",
    "submitted",
    "committed",
    "failed",
    "send_rate_actual",
    "throughput",
    "latency_min",
    "latency_avg",
    "latency_max",
    "latency_p95",
    "duration",
)


@dataclass(frozen=True)
class RoundMetrics:
    label: str
    submitted: int
    committed: int
    failed: int
    send_rate_actual: float  # tps
    throughput: float  # committed / duration, tps
    latency_min: float | None  # ms, over committed txs
    latency_avg: float | None
    latency_max: float | None
    latency_p95: float | None
    duration: float  # s

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class MetricsReport:
    rounds: list[RoundMetrics] = field(default_factory=list)
    chain_intact: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"rounds": [r.to_dict() for r in self.rounds], "chain_intact": self.chain_intact}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricsReport":
        return cls([RoundMetrics(**r) for r in d["rounds"]], d.get("chain_intact"))


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile, q in (0, 100]."""
    if not values:
        raise ValueError("percentile of empty sequence")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def aggregate(
    label: str,
    submitted: int,
    latencies_ms: Sequence[float],
    failed: int,
    send_duration_s: float,
    duration_s: float,
) -> RoundMetrics:
    committed = len(latencies_ms)
    if committed + failed > submitted:
        raise ValueError("committed + failed exceeds submitted")
    duration_s = max(duration_s, send_duration_s)
    lat = list(latencies_ms)
    return RoundMetrics(
        label=label,
        submitted=submitted,
        committed=committed,
        failed=failed,
        send_rate_actual=submitted / send_duration_s if send_duration_s > 0 else 0.0,
        throughput=committed / duration_s if duration_s > 0 else 0.0,
        latency_min=min(lat) if lat else None,
        latency_avg=sum(lat) / committed if lat else None,
        latency_max=max(lat) if lat else None,
        latency_p95=percentile(lat, 95) if lat else None,
        duration=duration_s,
    )


def _fmt(v: float | None, unit: str = "") -> str:
    return "-" if v is None else f"{v:.2f}{unit}"


def render_report(report: MetricsReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    head = ["Label", "Send Rate", "Throughput", "Min", "Avg", "Max", "P95"]
    rows = [
        [
            r.label,
            f"{r.send_rate_actual:.1f} TPS",
            f"{r.throughput:.1f} TPS",
            _fmt(r.latency_min, " ms"),
            _fmt(r.latency_avg, " ms"),
            _fmt(r.latency_max, " ms"),
            _fmt(r.latency_p95, " ms"),
        ]
        for r in report.rounds
    ]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]

    def line(cells: list[str]) -> str:
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [sep, line(head), sep, *(line(r) for r in rows), sep]
    return ("\n".join(out) + "\n").encode()
