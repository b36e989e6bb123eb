import json
import random
from collections import Counter
from datetime import date, datetime, timedelta, timezone

import pytest

from storywrangler.ingest import BucketKey, DayCounts
from storywrangler.store import Store
from storywrangler.zipf import build_daily_zipf


def make_counts(day, language, n, ot=None, rt=None, volume=None) -> DayCounts:
    ot = Counter(ot or {})
    rt = Counter(rt or {})
    if volume is None:
        volume = (sum(ot.values()) and 1 or 0, sum(rt.values()) and 1 or 0)
    return DayCounts(
        bucket=BucketKey(date=day, language=language),
        n=n,
        ot=ot,
        rt=rt,
        message_volume=volume,
    )


def put_cell(store: Store, day, language, n, ot=None, rt=None, **kwargs):
    z = build_daily_zipf(make_counts(day, language, n, ot, rt), **kwargs)
    store.put_day(z)
    return z


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "store")


def ndjson_line(
    text,
    ts="2020-07-01T12:00:00Z",
    lang="en",
    conf=0.9,
    kind="original",
    src=None,
    quoted=None,
) -> str:
    obj = {"text": text, "ts": ts, "lang": lang, "conf": conf, "kind": kind}
    if src is not None:
        obj["src"] = src
    if quoted is not None:
        obj["quoted"] = quoted
    return json.dumps(obj, ensure_ascii=False)


def synthetic_corpus(
    n_messages: int,
    seed: int = 1234,
    languages=("en", "fr", "es"),
    days=("2020-07-01", "2020-07-02"),
    vocab_size: int = 60,
) -> list[str]:
    """Mixed OT/RT/quote NDJSON lines with a small zipfian vocabulary."""
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(vocab_size)] + [
        "#tag", "@someone", "🚀", "$9.99", "It's", "B&M", "the", "2018-01-01",
    ]
    weights = [1.0 / (i + 1) for i in range(len(vocab))]
    lines = []
    for _ in range(n_messages):
        k = rng.randint(1, 12)
        words = rng.choices(vocab, weights=weights, k=k)
        text = " ".join(words)
        day = rng.choice(days)
        hour = rng.randint(0, 23)
        ts = f"{day}T{hour:02d}:{rng.randint(0, 59):02d}:00Z"
        lang = rng.choice(languages)
        conf = rng.choice([0.9, 0.8, 0.5, 0.2])
        kind = rng.choices(["original", "retweet", "quote"], weights=[5, 3, 1])[0]
        src = f"user{rng.randint(1, 20)}" if kind == "retweet" else None
        quoted = "something quoted" if kind == "quote" else None
        lines.append(ndjson_line(text, ts, lang, conf, kind, src, quoted))
    return lines
