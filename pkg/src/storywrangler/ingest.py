"""Message classification, day/language bucketing, and streaming n-gram counts.

Incoming messages are split into two scopes: organic content (``OT``,
original posts plus the comment half of quote posts) and reshared
content (``RT``).  Reshare text is enriched with the conventional
``RT @handle: `` prefix so the enrichment tokens participate in the
counts.  Messages are bucketed by the civil calendar date in
America/New_York and by language label, falling back to ``und`` when
the upstream language confidence is not above the threshold.

Counting is exact: every n-gram occurrence in a message increments one
integer counter, with no sampling or approximation inside the engine.
The stream may be partitioned arbitrarily across workers; merging
accumulators is cell-wise integer addition and is order-independent.

Input format (one JSON object per line):

    {"text": str, "ts": RFC3339 str, "lang": str, "conf": float,
     "kind": "original"|"retweet"|"quote", "src": str?, "quoted": str?}

Unknown fields are ignored; malformed lines increment an error counter
and never abort the stream.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Iterable, Iterator, Optional
from zoneinfo import ZoneInfo

from .tokenizer import is_segmentable, token_texts

OT = "OT"
RT = "RT"
AT = "AT"

KIND_ORIGINAL = "original"
KIND_RETWEET = "retweet"
KIND_QUOTE = "quote"
_KINDS = frozenset({KIND_ORIGINAL, KIND_RETWEET, KIND_QUOTE})

DEFAULT_CONFIDENCE_THRESHOLD = 0.25
UNDEFINED_LANGUAGE = "und"

_EASTERN = ZoneInfo("America/New_York")
_MIN_TS = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MAX_TS = datetime(2100, 12, 31, 23, 59, 59, tzinfo=timezone.utc)


class IngestError(ValueError):
    """A message that cannot be classified or parsed."""


@dataclass(frozen=True)
class RawMessage:
    text: str
    timestamp: datetime  # timezone-aware UTC instant
    language_code: str
    language_confidence: float
    kind: str
    source_handle: Optional[str] = None
    quoted_text: Optional[str] = None


@dataclass(frozen=True)
class BucketKey:
    """Civil Eastern-Time date plus language label."""

    date: date
    language: str


@dataclass(frozen=True)
class ClassifiedMessage:
    effective_text: str
    scope: str  # OT or RT
    bucket: BucketKey


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC3339 timestamp; requires an explicit UTC offset or Z."""
    s = value.strip()
    if not s:
        raise IngestError("empty timestamp")
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(s)
    except ValueError:
        # Normalize fractional seconds to the 6 digits fromisoformat accepts.
        if "." in s:
            head, _, rest = s.partition(".")
            frac = ""
            while rest and rest[0].isdigit():
                frac += rest[0]
                rest = rest[1:]
            frac = (frac + "000000")[:6]
            try:
                ts = datetime.fromisoformat(f"{head}.{frac}{rest}")
            except ValueError as exc:
                raise IngestError(f"bad timestamp {value!r}") from exc
        else:
            raise IngestError(f"bad timestamp {value!r}")
    if ts.tzinfo is None:
        raise IngestError(f"timestamp missing UTC offset: {value!r}")
    ts = ts.astimezone(timezone.utc)
    if not _MIN_TS <= ts <= _MAX_TS:
        raise IngestError(f"timestamp outside supported range: {value!r}")
    return ts


def parse_ndjson_line(line: str) -> RawMessage:
    """One input record; raises :class:`IngestError` on any malformed field."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(f"bad JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise IngestError("record is not an object")
    try:
        text = obj["text"]
        ts = obj["ts"]
        lang = obj["lang"]
        conf = obj["conf"]
        kind = obj["kind"]
    except KeyError as exc:
        raise IngestError(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(text, str):
        raise IngestError("text must be a string")
    if not isinstance(lang, str) or not lang:
        raise IngestError("lang must be a non-empty string")
    if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not 0.0 <= conf <= 1.0:
        raise IngestError(f"conf must be a number in [0,1], got {conf!r}")
    if kind not in _KINDS:
        raise IngestError(f"unknown kind {kind!r}")
    src = obj.get("src")
    quoted = obj.get("quoted")
    if kind == KIND_RETWEET and not isinstance(src, str):
        raise IngestError("retweet record missing 'src'")
    if kind == KIND_QUOTE and not isinstance(quoted, str):
        raise IngestError("quote record missing 'quoted'")
    return RawMessage(
        text=text,
        timestamp=parse_timestamp(ts if isinstance(ts, str) else ""),
        language_code=lang,
        language_confidence=float(conf),
        kind=kind,
        source_handle=src if isinstance(src, str) else None,
        quoted_text=quoted if isinstance(quoted, str) else None,
    )


def _scope_and_text(m: RawMessage) -> tuple[str, str]:
    if m.kind == KIND_ORIGINAL:
        return OT, m.text
    if m.kind == KIND_QUOTE:
        return OT, m.text  # the comment only; quoted content is discarded
    if m.kind == KIND_RETWEET:
        if m.source_handle is None:
            raise IngestError("retweet missing source handle")
        return RT, f"RT @{m.source_handle}: {m.text}"
    raise IngestError(f"unknown kind {m.kind!r}")


# America/New_York offsets change only on whole hours, so the mapping
# from epoch-hour to civil date is stable and cacheable.
_date_cache: dict[int, date] = {}


def eastern_date(ts: datetime) -> date:
    epoch_hour = int(ts.timestamp()) // 3600
    d = _date_cache.get(epoch_hour)
    if d is None:
        d = _date_cache[epoch_hour] = ts.astimezone(_EASTERN).date()
    return d


def assign_bucket(
    m: RawMessage, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
) -> BucketKey:
    """Eastern-Time date plus language (``und`` unless confidence > threshold)."""
    if not _MIN_TS <= m.timestamp <= _MAX_TS:
        raise IngestError(f"timestamp outside supported range: {m.timestamp}")
    lang = (
        m.language_code
        if m.language_confidence > confidence_threshold
        else UNDEFINED_LANGUAGE
    )
    return BucketKey(date=eastern_date(m.timestamp), language=lang)


def classify_message(
    m: RawMessage, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
) -> ClassifiedMessage:
    """Scope, effective text and bucket for one message."""
    scope, text = _scope_and_text(m)
    return ClassifiedMessage(
        effective_text=text,
        scope=scope,
        bucket=assign_bucket(m, confidence_threshold),
    )


@dataclass
class DayCounts:
    """Exact per-n-gram counters for one (date, language, n) cell."""

    bucket: BucketKey
    n: int
    ot: Counter
    rt: Counter
    message_volume: tuple[int, int]  # (ot, rt)

    @property
    def counts(self) -> dict[str, tuple[int, int]]:
        """Map n-gram -> (f_ot, f_rt) over the union lexicon."""
        out = {}
        for k in self.ot.keys() | self.rt.keys():
            out[k] = (self.ot.get(k, 0), self.rt.get(k, 0))
        return out

    def __len__(self) -> int:
        return len(self.ot.keys() | self.rt.keys())


class _Cell:
    """Private per-(date, language) accumulator: volumes plus 6 counters."""

    __slots__ = ("vol_ot", "vol_rt", "ot", "rt")

    def __init__(self) -> None:
        self.vol_ot = 0
        self.vol_rt = 0
        self.ot = (Counter(), Counter(), Counter())  # n = 1, 2, 3
        self.rt = (Counter(), Counter(), Counter())


class StreamCounts:
    """Accumulated counts for a message stream, mergeable across workers."""

    def __init__(self, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD):
        self.confidence_threshold = confidence_threshold
        self.messages = 0
        self.errors = 0
        self._cells: dict[tuple[date, str], _Cell] = {}

    def feed(self, m: RawMessage) -> None:
        """Count one message; classification errors are counted, not raised."""
        try:
            scope, text = _scope_and_text(m)
            bucket = assign_bucket(m, self.confidence_threshold)
        except IngestError:
            self.errors += 1
            return
        self.messages += 1
        key = (bucket.date, bucket.language)
        cell = self._cells.get(key)
        if cell is None:
            cell = self._cells[key] = _Cell()
        if scope == OT:
            cell.vol_ot += 1
            side = cell.ot
        else:
            cell.vol_rt += 1
            side = cell.rt
        if not is_segmentable(bucket.language, text):
            return
        toks = token_texts(text)
        if not toks:
            return
        side[0].update(toks)
        if len(toks) >= 2:
            side[1].update(map(" ".join, zip(toks, toks[1:])))
            if len(toks) >= 3:
                side[2].update(map(" ".join, zip(toks, toks[1:], toks[2:])))

    def feed_line(self, line: str) -> None:
        """Parse and count one NDJSON line; malformed lines are counted."""
        if not line.strip():
            return
        try:
            m = parse_ndjson_line(line)
        except IngestError:
            self.errors += 1
            return
        self.feed(m)

    def merge(self, other: "StreamCounts") -> None:
        """Cell-wise addition; the result is independent of merge order."""
        self.messages += other.messages
        self.errors += other.errors
        for key, ocell in other._cells.items():
            cell = self._cells.get(key)
            if cell is None:
                cell = self._cells[key] = _Cell()
            cell.vol_ot += ocell.vol_ot
            cell.vol_rt += ocell.vol_rt
            for i in range(3):
                cell.ot[i].update(ocell.ot[i])
                cell.rt[i].update(ocell.rt[i])

    def day_counts(self) -> list[DayCounts]:
        """One DayCounts per (date, language, n) cell with nonzero volume,
        in deterministic (date, language, n) order."""
        out = []
        for (d, lang), cell in sorted(
            self._cells.items(), key=lambda kv: (kv[0][0].toordinal(), kv[0][1])
        ):
            volume = (cell.vol_ot, cell.vol_rt)
            for i in range(3):
                out.append(
                    DayCounts(
                        bucket=BucketKey(date=d, language=lang),
                        n=i + 1,
                        ot=cell.ot[i],
                        rt=cell.rt[i],
                        message_volume=volume,
                    )
                )
        return out


def count_stream(
    messages: Iterable[RawMessage],
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> StreamCounts:
    """Classify, bucket, tokenize and count a finite stream of messages."""
    acc = StreamCounts(confidence_threshold)
    for m in messages:
        acc.feed(m)
    return acc


def count_ndjson(
    lines: Iterable[str],
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> StreamCounts:
    """Count a stream of NDJSON lines, skipping malformed ones."""
    acc = StreamCounts(confidence_threshold)
    feed_line = acc.feed_line
    for line in lines:
        feed_line(line)
    return acc


def iter_raw_messages(lines: Iterable[str]) -> Iterator[RawMessage]:
    """Parse NDJSON lines strictly, raising on the first malformed record."""
    for line in lines:
        if line.strip():
            yield parse_ndjson_line(line)
