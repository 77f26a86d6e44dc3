"""Fixed-rate benchmark rounds against the ledger pipeline."""

from .config import BenchConfigError, BenchmarkConfig, Round, default_config
from .engine import BenchmarkError, BenchRunner, pool_ids, run_benchmark
from .report import MetricsReport, RoundMetrics, aggregate, percentile, render_report

__all__ = [
    "BenchConfigError", "BenchRunner", "BenchmarkConfig", "BenchmarkError", "MetricsReport",
    "Round", "RoundMetrics", "aggregate", "default_config", "percentile", "pool_ids",
    "render_report", "run_benchmark",
]
