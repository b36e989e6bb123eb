import json
from collections import Counter
from datetime import date, datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storywrangler.ingest import (
    BucketKey,
    IngestError,
    RawMessage,
    StreamCounts,
    assign_bucket,
    classify_message,
    count_ndjson,
    count_stream,
    parse_ndjson_line,
    parse_timestamp,
)

from conftest import ndjson_line, synthetic_corpus


def msg(text="hello", ts="2020-07-01T12:00:00+00:00", lang="en", conf=0.9,
        kind="original", src=None, quoted=None) -> RawMessage:
    return RawMessage(
        text=text,
        timestamp=datetime.fromisoformat(ts),
        language_code=lang,
        language_confidence=conf,
        kind=kind,
        source_handle=src,
        quoted_text=quoted,
    )


class TestClassify:
    def test_original_is_identity(self):
        c = classify_message(msg("hello"))
        assert (c.scope, c.effective_text) == ("OT", "hello")

    def test_retweet_is_enriched(self):
        c = classify_message(msg("big news", kind="retweet", src="abc"))
        assert (c.scope, c.effective_text) == ("RT", "RT @abc: big news")
        assert c.effective_text.startswith("RT @")

    def test_quote_keeps_comment_only(self):
        c = classify_message(msg("agreed!", kind="quote", quoted="big news"))
        assert (c.scope, c.effective_text) == ("OT", "agreed!")
        assert "big news" not in c.effective_text

    def test_retweet_without_source_is_rejected(self):
        with pytest.raises(IngestError, match="source handle"):
            classify_message(msg("x", kind="retweet"))


class TestBucket:
    def test_utc_early_morning_is_previous_eastern_day(self):
        b = assign_bucket(msg(ts="2020-01-01T04:59:00+00:00"))
        assert b == BucketKey(date(2019, 12, 31), "en")

    def test_midday_summer(self):
        b = assign_bucket(msg(ts="2020-07-01T12:00:00+00:00", lang="fr"))
        assert b == BucketKey(date(2020, 7, 1), "fr")

    def test_low_confidence_goes_undefined(self):
        b = assign_bucket(msg(ts="2020-07-01T12:00:00+00:00", lang="fr", conf=0.20))
        assert b.language == "und"

    def test_threshold_is_strict(self):
        assert assign_bucket(msg(conf=0.25)).language == "und"
        assert assign_bucket(msg(conf=0.250001)).language == "en"

    def test_dst_boundary_summer(self):
        # EDT is UTC-4: 03:59Z is still the previous civil day.
        b = assign_bucket(msg(ts="2020-07-01T03:59:00+00:00"))
        assert b.date == date(2020, 6, 30)
        b = assign_bucket(msg(ts="2020-07-01T04:00:00+00:00"))
        assert b.date == date(2020, 7, 1)

    def test_dst_boundary_winter(self):
        # EST is UTC-5.
        assert assign_bucket(msg(ts="2020-01-01T04:59:00+00:00")).date == date(2019, 12, 31)
        assert assign_bucket(msg(ts="2020-01-01T05:00:00+00:00")).date == date(2020, 1, 1)


class TestTimestampParsing:
    def test_zulu_suffix(self):
        ts = parse_timestamp("2020-07-01T12:00:00Z")
        assert ts == datetime(2020, 7, 1, 12, tzinfo=timezone.utc)

    def test_explicit_offset(self):
        ts = parse_timestamp("2020-07-01T08:00:00-04:00")
        assert ts == datetime(2020, 7, 1, 12, tzinfo=timezone.utc)

    def test_fractional_seconds(self):
        ts = parse_timestamp("2020-07-01T12:00:00.5Z")
        assert ts.microsecond == 500000

    def test_missing_offset_rejected(self):
        with pytest.raises(IngestError):
            parse_timestamp("2020-07-01T12:00:00")

    def test_out_of_range_rejected(self):
        with pytest.raises(IngestError):
            parse_timestamp("2101-01-01T00:00:00Z")


class TestNdjson:
    def test_round_trip(self):
        m = parse_ndjson_line(ndjson_line("hi", kind="retweet", src="u"))
        assert m.kind == "retweet" and m.source_handle == "u"

    def test_unknown_fields_ignored(self):
        line = json.dumps({"text": "x", "ts": "2020-07-01T12:00:00Z",
                           "lang": "en", "conf": 0.9, "kind": "original",
                           "extra": 42})
        assert parse_ndjson_line(line).text == "x"

    @pytest.mark.parametrize("line", [
        "not json",
        json.dumps({"text": "x"}),
        json.dumps({"text": "x", "ts": "2020-07-01T12:00:00Z", "lang": "en",
                    "conf": 2.0, "kind": "original"}),
        json.dumps({"text": "x", "ts": "2020-07-01T12:00:00Z", "lang": "en",
                    "conf": 0.9, "kind": "nope"}),
        json.dumps({"text": "x", "ts": "2020-07-01T12:00:00Z", "lang": "en",
                    "conf": 0.9, "kind": "retweet"}),
        json.dumps({"text": "x", "ts": "bad", "lang": "en", "conf": 0.9,
                    "kind": "original"}),
    ])
    def test_malformed_lines_rejected(self, line):
        with pytest.raises(IngestError):
            parse_ndjson_line(line)

    def test_malformed_lines_counted_not_fatal(self):
        acc = count_ndjson(["garbage", ndjson_line("ok"), ""])
        assert acc.errors == 1
        assert acc.messages == 1


class TestCountStream:
    def test_simple_counts(self):
        acc = count_stream([msg("a b a")])
        (dc1,) = [d for d in acc.day_counts() if d.n == 1]
        assert dc1.counts == {"a": (2, 0), "b": (1, 0)}
        assert dc1.message_volume == (1, 0)

    def test_rt_enrichment_is_counted(self):
        acc = count_stream([
            msg("x"),
            msg("x", kind="retweet", src="u"),
        ])
        (dc1,) = [d for d in acc.day_counts() if d.n == 1]
        counts = dc1.counts
        assert counts["x"] == (1, 1)
        assert counts["RT"] == (0, 1)
        assert counts["@u"] == (0, 1)
        assert counts[":"] == (0, 1)
        assert dc1.message_volume == (1, 1)

    def test_empty_stream(self):
        assert count_stream([]).day_counts() == []

    def test_bigrams_and_trigrams(self):
        acc = count_stream([msg("a b c")])
        by_n = {d.n: d for d in acc.day_counts()}
        assert by_n[2].counts == {"a b": (1, 0), "b c": (1, 0)}
        assert by_n[3].counts == {"a b c": (1, 0)}

    def test_unsegmentable_counts_volume_only(self):
        acc = count_stream([msg("こんにちは", lang="ja")])
        cells = acc.day_counts()
        assert len(cells) == 3  # n = 1, 2, 3
        for dc in cells:
            assert dc.counts == {}
            assert dc.message_volume == (1, 0)

    def test_scope_partition(self):
        acc = count_stream([
            msg("a"), msg("a", kind="retweet", src="u"), msg("a", kind="quote", quoted="q"),
        ])
        (dc1,) = [d for d in acc.day_counts() if d.n == 1]
        f_ot, f_rt = dc1.counts["a"]
        # every occurrence lands in exactly one scope
        assert f_ot == 2 and f_rt == 1

    def test_messages_split_across_days_and_languages(self):
        acc = count_stream([
            msg("a", ts="2020-07-01T12:00:00+00:00", lang="en"),
            msg("b", ts="2020-07-02T12:00:00+00:00", lang="en"),
            msg("c", ts="2020-07-01T12:00:00+00:00", lang="fr"),
        ])
        buckets = {(d.bucket.date.isoformat(), d.bucket.language)
                   for d in acc.day_counts()}
        assert buckets == {("2020-07-01", "en"), ("2020-07-02", "en"),
                           ("2020-07-01", "fr")}


def brute_force_recount(lines):
    """Independent oracle: naive per-message dict counting."""
    from storywrangler.tokenizer import is_segmentable, token_texts

    cells = {}
    errors = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            m = parse_ndjson_line(line)
            if m.kind == "retweet":
                scope, text = "RT", f"RT @{m.source_handle}: {m.text}"
            else:
                scope, text = "OT", m.text
            lang = m.language_code if m.language_confidence > 0.25 else "und"
            day = m.timestamp.astimezone(
                __import__("zoneinfo").ZoneInfo("America/New_York")
            ).date()
        except IngestError:
            errors += 1
            continue
        key = (day, lang)
        cell = cells.setdefault(key, {"vol": [0, 0], "grams": {}})
        cell["vol"][0 if scope == "OT" else 1] += 1
        if not is_segmentable(lang, text):
            continue
        toks = token_texts(text)
        for n in (1, 2, 3):
            for i in range(len(toks) - n + 1):
                g = " ".join(toks[i:i + n])
                pair = cell["grams"].setdefault((n, g), [0, 0])
                pair[0 if scope == "OT" else 1] += 1
    return cells, errors


class TestOracleEquivalence:
    def test_counts_equal_brute_force_recount(self):
        lines = synthetic_corpus(400, seed=99)
        acc = count_ndjson(lines)
        oracle_cells, oracle_errors = brute_force_recount(lines)
        assert acc.errors == oracle_errors
        got = {}
        for dc in acc.day_counts():
            for g, (f_ot, f_rt) in dc.counts.items():
                got[(dc.bucket.date, dc.bucket.language, dc.n, g)] = (f_ot, f_rt)
        want = {}
        for (day, lang), cell in oracle_cells.items():
            for (n, g), (f_ot, f_rt) in cell["grams"].items():
                want[(day, lang, n, g)] = (f_ot, f_rt)
        assert got == want

    def test_volume_equal_brute_force(self):
        lines = synthetic_corpus(300, seed=5)
        acc = count_ndjson(lines)
        oracle_cells, _ = brute_force_recount(lines)
        for dc in acc.day_counts():
            vol = oracle_cells[(dc.bucket.date, dc.bucket.language)]["vol"]
            assert dc.message_volume == tuple(vol)


class TestMergeAndAdditivity:
    @given(st.integers(0, 120), st.integers(0, 3))
    @settings(max_examples=20, deadline=None)
    def test_additivity(self, cut, seed):
        lines = synthetic_corpus(120, seed=seed)
        whole = count_ndjson(lines)
        left = count_ndjson(lines[:cut])
        right = count_ndjson(lines[cut:])
        left.merge(right)
        assert _cells_snapshot(left) == _cells_snapshot(whole)
        assert (left.messages, left.errors) == (whole.messages, whole.errors)

    def test_merge_order_does_not_matter(self):
        lines = synthetic_corpus(150, seed=11)
        thirds = [lines[0:50], lines[50:100], lines[100:150]]
        parts = [count_ndjson(t) for t in thirds]
        a = StreamCounts()
        for p in [count_ndjson(t) for t in thirds]:
            a.merge(p)
        b = StreamCounts()
        for p in [count_ndjson(t) for t in reversed(thirds)]:
            b.merge(p)
        assert _cells_snapshot(a) == _cells_snapshot(b)


def _cells_snapshot(acc: StreamCounts):
    return {
        (dc.bucket.date, dc.bucket.language, dc.n): (
            dc.message_volume,
            sorted(dc.counts.items()),
        )
        for dc in acc.day_counts()
    }
