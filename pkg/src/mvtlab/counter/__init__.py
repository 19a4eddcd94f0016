"""Exact and windowed Diophantine solution counting."""

from .cache import cache_load, cache_store
from .engine import (
    CounterConfig,
    CountResult,
    RecordTable,
    TupleRecord,
    count,
    count_bilinear,
    count_exact,
    count_windowed,
    diagonal_lower_bound,
    preflight,
    side_table,
)
from .oracle import brute_oracle, grouped_oracle

__all__ = [
    "CounterConfig",
    "CountResult",
    "RecordTable",
    "TupleRecord",
    "brute_oracle",
    "cache_load",
    "cache_store",
    "count",
    "count_bilinear",
    "count_exact",
    "count_windowed",
    "diagonal_lower_bound",
    "grouped_oracle",
    "preflight",
    "side_table",
]
