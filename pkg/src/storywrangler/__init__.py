"""Day-scale n-gram analytics for timestamped, language-labeled short messages."""

from .ingest import (
    BucketKey,
    ClassifiedMessage,
    DayCounts,
    RawMessage,
    StreamCounts,
    assign_bucket,
    classify_message,
    count_ndjson,
    count_stream,
)
from .measures import contagiogram, relative_amplification, rolling_mean, rt_balance, series
from .store import Store
from .tokenizer import NgramKey, Token, TokenClass, is_segmentable, ngrams, tokenize
from .trending import FilterPolicy, TrendingEntry, apply_filter, narratively_trending, rtd_contribution
from .zipf import DailyZipf, NgramRecord, build_daily_zipf, fractional_ranks, zipf_to_rows

__version__ = "0.1.0"

__all__ = [
    "BucketKey",
    "ClassifiedMessage",
    "DailyZipf",
    "DayCounts",
    "FilterPolicy",
    "NgramKey",
    "NgramRecord",
    "RawMessage",
    "Store",
    "StreamCounts",
    "Token",
    "TokenClass",
    "TrendingEntry",
    "apply_filter",
    "assign_bucket",
    "build_daily_zipf",
    "classify_message",
    "contagiogram",
    "count_ndjson",
    "count_stream",
    "fractional_ranks",
    "is_segmentable",
    "narratively_trending",
    "ngrams",
    "relative_amplification",
    "rolling_mean",
    "rt_balance",
    "rtd_contribution",
    "series",
    "tokenize",
    "zipf_to_rows",
]
