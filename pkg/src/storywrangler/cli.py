"""Operator command line: build stores, run queries, launch the API server.

Subcommands::

    storywrangler build         ingest NDJSON, write daily distributions
    storywrangler query         time-series for n-grams (JSON or CSV)
    storywrangler trending      top-k divergence list for one day
    storywrangler contagiogram  amplification payload for one n-gram
    storywrangler serve         HTTP API (optionally serving the viewer UI)
    storywrangler tokenize      tokenizer check, no store required

Exit codes: 0 success, 1 usage error, 2 data error (missing cells,
malformed queries), 3 I/O error.  The store root comes from
``--store-root`` or the ``STORYWRANGLER_STORE`` environment variable.
Query-style commands emit exactly the bytes the HTTP API would return
for the same logical query.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import api as api_mod
from .api import ApiError
from .ingest import StreamCounts, count_ndjson
from .store import CellExistsError, Store, StoreError
from .tokenizer import tokenize
from .trending import DEFAULT_ALPHA, DEFAULT_TOP_K, FilterPolicy, stopwords
from .zipf import DEFAULT_TRUNCATE_AT, build_daily_zipf

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

_CHUNK_LINES = 20_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class CliDataError(Exception):
    pass


class CliUsageError(Exception):
    pass


def _store_root(args) -> Path:
    root = args.store_root or os.environ.get("STORYWRANGLER_STORE")
    if not root:
        raise CliUsageError(
            "store root required: pass --store-root or set STORYWRANGLER_STORE"
        )
    return Path(root)


def _add_store_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--store-root",
        metavar="DIR",
        help="store directory (default: $STORYWRANGLER_STORE)",
    )


def _write_out(data: bytes, out: str) -> None:
    if out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(out).write_bytes(data)


def _count_chunk(lines: list[str]) -> StreamCounts:
    return count_ndjson(lines)


def _chunked(lines: Iterable[str], size: int) -> Iterable[list[str]]:
    batch: list[str] = []
    for line in lines:
        batch.append(line)
        if len(batch) >= size:
            yield batch
            batch = []
    if batch:
        yield batch


def cmd_build(args) -> int:
    store = Store(_store_root(args))
    t0 = time.perf_counter()
    paths = [Path(p) for p in args.inputs]
    for p in paths:
        if not p.is_file():
            print(f"input not readable: {p}", file=sys.stderr)
            return EXIT_IO

    def read_lines():
        for p in paths:
            with open(p, encoding="utf-8", errors="replace") as f:
                yield from f

    workers = args.workers or os.cpu_count() or 1
    if workers <= 1:
        counts = count_ndjson(read_lines())
    else:
        counts = StreamCounts()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(
                _count_chunk, _chunked(read_lines(), _CHUNK_LINES)
            ):
                counts.merge(part)

    cells_written = 0
    for dc in counts.day_counts():
        if not len(dc) and dc.message_volume == (0, 0):
            continue
        if not len(dc):
            continue  # volume-only cell (e.g. unsegmentable text): no rows to store
        z = build_daily_zipf(dc, truncate_at=args.truncate_at)
        try:
            store.put_day(z, overwrite=args.overwrite)
        except CellExistsError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_DATA
        cells_written += 1

    report = {
        "messages": counts.messages,
        "parse_errors": counts.errors,
        "cells_written": cells_written,
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
    }
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _parse_cli_date(value: str, flag: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise CliUsageError(f"bad {flag} date: {value!r}")


def cmd_query(args) -> int:
    store = Store(_store_root(args))
    payload = api_mod.timeseries_payload(
        store,
        ngrams=args.q,
        language=args.lang,
        start=_parse_cli_date(args.from_date, "--from"),
        end=_parse_cli_date(args.to_date, "--to"),
        metric=args.metric,
        rt_included=args.rt,
        n=args.n,
    )
    if args.format == "csv":
        data = api_mod.timeseries_csv(payload).encode("utf-8")
    else:
        data = api_mod.render_json(payload)
    _write_out(data, args.out)
    return EXIT_OK


def cmd_trending(args) -> int:
    store = Store(_store_root(args))
    policy = FilterPolicy(
        drop_links=args.drop_links,
        drop_handles=args.drop_handles,
        drop_emojis=args.drop_emojis,
        drop_stopwords=args.drop_stopwords,
        keep_hashtags=args.keep_hashtags,
        stopword_list=stopwords(args.lang),
    )
    entries = api_mod.trending_payload(
        store,
        language=args.lang,
        n=args.n,
        day=_parse_cli_date(args.date, "--date"),
        k=args.k,
        alpha=args.alpha,
        policy=policy,
    )
    if args.format == "csv":
        data = api_mod.trending_csv(entries).encode("utf-8")
    else:
        data = api_mod.render_json(entries)
    _write_out(data, args.out)
    return EXIT_OK


def cmd_contagiogram(args) -> int:
    store = Store(_store_root(args))
    payload = api_mod.build_contagiogram_payload(
        store,
        ngram=args.q,
        language=args.lang,
        n=api_mod.infer_n(args.q),
        start=_parse_cli_date(args.from_date, "--from"),
        end=_parse_cli_date(args.to_date, "--to"),
        smoothing_window=args.window,
    )
    _write_out(api_mod.render_json(payload), args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    host, _, port_str = args.bind.rpartition(":")
    if not host or not port_str.isdigit():
        raise CliUsageError(f"bad --bind {args.bind!r}, expected HOST:PORT")
    port = int(os.environ.get("PORT", port_str))
    app = api_mod.create_app(
        _store_root(args),
        cors_origins=args.cors or (),
        ui_dir=args.serve_ui,
    )
    uvicorn.run(app, host=host, port=port, log_level="info")
    return EXIT_OK


def cmd_tokenize(args) -> int:
    lines: Iterable[str]
    if args.text:
        lines = args.text
    else:
        lines = (line.rstrip("\n") for line in sys.stdin)
    for line in lines:
        tokens = [{"text": t.text, "class": t.cls.value} for t in tokenize(line)]
        print(json.dumps(tokens, ensure_ascii=False))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="storywrangler",
        description="Day-scale n-gram analytics over timestamped messages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="ingest NDJSON and write daily distributions")
    _add_store_arg(p)
    p.add_argument("inputs", nargs="+", metavar="NDJSON", help="input files")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel counting workers (default: CPU count)")
    p.add_argument("--overwrite", action="store_true",
                   help="replace existing cells")
    p.add_argument("--truncate-at", type=int, default=DEFAULT_TRUNCATE_AT,
                   help="keep at most this many rows per cell")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="time-series for up to 10 n-grams")
    _add_store_arg(p)
    p.add_argument("--q", action="append", required=True, metavar="NGRAM",
                   help="n-gram to query (repeatable)")
    p.add_argument("--lang", required=True)
    p.add_argument("--n", type=int, choices=(1, 2, 3), default=None,
                   help="expected n (informational; per-series n is inferred)")
    p.add_argument("--metric", choices=("rank", "freq", "count"), default="rank")
    p.add_argument("--rt", action=argparse.BooleanOptionalAction, default=True,
                   help="include reshared content (default) or organic only")
    p.add_argument("--from", dest="from_date", required=True, metavar="DATE")
    p.add_argument("--to", dest="to_date", required=True, metavar="DATE")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("trending", help="top-k narratively trending n-grams")
    _add_store_arg(p)
    p.add_argument("--lang", required=True)
    p.add_argument("--n", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--date", required=True, metavar="DATE")
    p.add_argument("--k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    for flag, default in (
        ("drop-links", True), ("drop-handles", True), ("drop-emojis", True),
        ("drop-stopwords", True), ("keep-hashtags", True),
    ):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"),
                       action=argparse.BooleanOptionalAction, default=default)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_trending)

    p = sub.add_parser("contagiogram", help="amplification payload for one n-gram")
    _add_store_arg(p)
    p.add_argument("--q", required=True, metavar="NGRAM")
    p.add_argument("--lang", required=True)
    p.add_argument("--from", dest="from_date", required=True, metavar="DATE")
    p.add_argument("--to", dest="to_date", required=True, metavar="DATE")
    p.add_argument("--window", type=int, default=30,
                   help="smoothing window in days")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_contagiogram)

    p = sub.add_parser("serve", help="run the HTTP API")
    _add_store_arg(p)
    p.add_argument("--bind", default="127.0.0.1:8000", metavar="HOST:PORT")
    p.add_argument("--cors", action="append", metavar="ORIGIN",
                   help="allowed CORS origin (repeatable)")
    p.add_argument("--serve-ui", metavar="DIR", default=None,
                   help="serve viewer static assets from this directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("tokenize", help="tokenize text (no store required)")
    p.add_argument("text", nargs="*", help="text to tokenize; stdin if omitted")
    p.set_defaults(func=cmd_tokenize, store_root=None)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliUsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ApiError as exc:
        print(exc.message, file=sys.stderr)
        return EXIT_USAGE if exc.status == 400 else EXIT_DATA
    except StoreError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
