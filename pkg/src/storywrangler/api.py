"""HTTP query surface over the store and analytics modules.

All endpoints are read-only and stateless: an identical request against
an identical store produces a byte-identical response body.  The CLI
query commands call the same payload builders and the same JSON
renderer, so CLI and API bodies match exactly.

Endpoints, parameters and schemas are documented in ``docs/api.md``;
response shapes are also published as JSON Schemas under
``docs/schemas/``.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from fastapi import FastAPI, Request, Response

from .measures import ContagiogramPayload, TimeSeries, contagiogram, series
from .store import CellNotFoundError, Store, StoreError
from .trending import (
    DEFAULT_ALPHA,
    DEFAULT_TOP_K,
    FilterPolicy,
    TrendingEntry,
    narratively_trending,
    stopwords,
)

MAX_QUERY_NGRAMS = 10
MAX_ZIPF_PAGE = 10_000
VALID_METRICS = ("rank", "freq", "count")
VALID_SCALES = ("log", "linear")


class ApiError(Exception):
    """Request failure carrying an HTTP status code."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def render_json(payload) -> bytes:
    """Canonical JSON bytes shared by the API and the CLI."""
    return json.dumps(
        payload, ensure_ascii=False, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


def _parse_date(value: str, param: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise ApiError(400, f"bad {param!r} date: {value!r}")


def _parse_bool(value: str, param: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ApiError(400, f"bad boolean for {param!r}: {value!r}")


def _parse_n(value: str) -> int:
    if value not in ("1", "2", "3"):
        raise ApiError(400, f"n must be 1, 2 or 3, got {value!r}")
    return int(value)


def infer_n(ngram: str) -> int:
    parts = ngram.split(" ")
    if not all(parts):
        raise ApiError(400, f"bad n-gram {ngram!r}: empty component")
    if len(parts) > 3:
        raise ApiError(400, f"bad n-gram {ngram!r}: more than 3 tokens")
    return len(parts)


def _known_language(store: Store, language: str) -> bool:
    return any(store.dates(language, n) for n in (1, 2, 3))


# -- payload builders (shared with the CLI) ---------------------------------


def languages_payload(store: Store) -> list[dict]:
    return [
        {
            "code": cov.code,
            "earliest_date": cov.earliest_date.isoformat(),
            "latest_date": cov.latest_date.isoformat(),
            "day_count": cov.day_count,
        }
        for cov in store.languages()
    ]


def _series_payload(ts: TimeSeries) -> dict:
    return {
        "ngram": ts.ngram,
        "language": ts.language,
        "n": ts.n,
        "metric": ts.metric,
        "scope": ts.scope,
        "points": [
            {"date": d.isoformat(), "value": v} for d, v in ts.points
        ],
    }


def timeseries_payload(
    store: Store,
    ngrams: Sequence[str],
    language: str,
    start: date,
    end: date,
    metric: str = "rank",
    rt_included: bool = True,
    n: Optional[int] = None,
    scale: Optional[str] = None,
) -> dict:
    if not ngrams:
        raise ApiError(400, "at least one n-gram required")
    if len(ngrams) > MAX_QUERY_NGRAMS:
        raise ApiError(400, f"at most {MAX_QUERY_NGRAMS} n-grams per query")
    if metric not in VALID_METRICS:
        raise ApiError(400, f"bad metric {metric!r}")
    if scale is not None and scale not in VALID_SCALES:
        raise ApiError(400, f"bad scale {scale!r}")
    if start > end:
        raise ApiError(400, f"date range not well-ordered: {start} > {end}")
    if not _known_language(store, language):
        raise ApiError(404, f"unknown language {language!r}")
    scope = "AT" if rt_included else "OT"
    sizes = [infer_n(g) for g in ngrams]
    all_series = [
        _series_payload(
            series(store, g, language, size, start, end, metric, scope)
        )
        for g, size in zip(ngrams, sizes)
    ]
    return {
        "query": {
            "ngrams": list(ngrams),
            "language": language,
            "n": n,
            "metric": metric,
            "rt_included": rt_included,
            "scope": scope,
            "from": start.isoformat(),
            "to": end.isoformat(),
            "scale": scale,
        },
        "rank_comparable": len(set(sizes)) <= 1,
        "series": all_series,
    }


def timeseries_csv(payload: dict) -> str:
    """CSV projection of a timeseries payload: one row per point."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ngram", "date", "value"])
    for s in payload["series"]:
        for point in s["points"]:
            value = point["value"]
            writer.writerow(
                [s["ngram"], point["date"], "" if value is None else repr(value)]
            )
    return buf.getvalue()


def zipf_page_payload(
    store: Store,
    language: str,
    n: int,
    day: date,
    cursor: Optional[str] = None,
    page_size: int = MAX_ZIPF_PAGE,
) -> dict:
    if not 1 <= page_size <= MAX_ZIPF_PAGE:
        raise ApiError(400, f"page_size must be in 1..{MAX_ZIPF_PAGE}")
    offset = 0
    if cursor is not None:
        try:
            offset = int(cursor)
        except ValueError:
            raise ApiError(400, f"bad cursor {cursor!r}")
        if offset < 0:
            raise ApiError(400, f"bad cursor {cursor!r}")
    try:
        z = store.get_day(day, language, n)
    except CellNotFoundError as exc:
        raise ApiError(404, str(exc))
    rows = []
    stop = min(offset + page_size, len(z))
    for i in range(offset, stop):
        rec = z.record(i)
        rows.append(
            {
                "ngram": rec.ngram,
                "f_at": rec.f_at,
                "f_ot": rec.f_ot,
                "f_rt": rec.f_rt,
                "p_at": rec.p_at,
                "p_ot": rec.p_ot,
                "p_rt": rec.p_rt,
                "r_at": rec.r_at,
                "r_ot": rec.r_ot,
                "r_rt": rec.r_rt,
            }
        )
    next_cursor = str(stop) if stop < len(z) else None
    return {
        "language": language,
        "n": n,
        "date": day.isoformat(),
        "total_at": z.total_at,
        "total_ot": z.total_ot,
        "total_rt": z.total_rt,
        "truncated": z.truncated,
        "row_count": len(z),
        "offset": offset,
        "rows": rows,
        "next_cursor": next_cursor,
    }


def _entry_payload(e: TrendingEntry) -> dict:
    return {
        "ngram": e.ngram,
        "rtd": e.rtd,
        "rank_today": e.rank_today,
        "rank_ref": e.rank_reference,
        "log10_rel_amp": e.log10_rel_amp,
    }


def trending_payload(
    store: Store,
    language: str,
    n: int,
    day: date,
    k: int = DEFAULT_TOP_K,
    alpha: float = DEFAULT_ALPHA,
    policy: Optional[FilterPolicy] = None,
) -> list[dict]:
    if k < 1:
        raise ApiError(400, f"k must be >= 1, got {k}")
    if alpha <= 0:
        raise ApiError(400, f"alpha must be positive, got {alpha}")
    try:
        entries = narratively_trending(
            store, day, language, n, k=k, policy=policy, alpha=alpha
        )
    except CellNotFoundError as exc:
        raise ApiError(409, str(exc))
    return [_entry_payload(e) for e in entries]


def trending_csv(entries: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ngram", "rtd", "rank_today", "rank_ref", "log10_rel_amp"])
    for e in entries:
        writer.writerow(
            [
                e["ngram"],
                repr(e["rtd"]),
                repr(e["rank_today"]),
                "" if e["rank_ref"] is None else repr(e["rank_ref"]),
                "" if e["log10_rel_amp"] is None else repr(e["log10_rel_amp"]),
            ]
        )
    return buf.getvalue()


def contagiogram_payload_dict(payload: ContagiogramPayload) -> dict:
    return {
        "ngram": payload.ngram,
        "language": payload.language,
        "n": payload.n,
        "from": payload.start.isoformat(),
        "to": payload.end.isoformat(),
        "rank_series": _series_payload(payload.rank_series),
        "rank_smoothed": _series_payload(payload.rank_smoothed),
        "weekly_band": [
            {
                "iso_year": b.iso_year,
                "iso_week": b.iso_week,
                "min_rank": b.min_rank,
                "max_rank": b.max_rank,
            }
            for b in payload.weekly_band
        ],
        "rt_balance": [
            {
                "year": m.year,
                "month": m.month,
                "value": m.value,
                "amplified": m.amplified,
            }
            for m in payload.rt_balance
        ],
        "rel_heatmap": [
            {
                "year": c.year,
                "month": c.month,
                "weekday": c.weekday,
                "value": c.value,
            }
            for c in payload.rel_heatmap
        ],
    }


def build_contagiogram_payload(
    store: Store,
    ngram: str,
    language: str,
    n: int,
    start: date,
    end: date,
    smoothing_window: int = 30,
) -> dict:
    if start > end:
        raise ApiError(400, f"date range not well-ordered: {start} > {end}")
    if smoothing_window < 1:
        raise ApiError(400, "smoothing window must be >= 1")
    try:
        payload = contagiogram(
            store, ngram, language, n, start, end, smoothing_window
        )
    except CellNotFoundError as exc:  # pragma: no cover - absent cells are gaps
        raise ApiError(409, str(exc))
    return contagiogram_payload_dict(payload)


# -- FastAPI application ------------------------------------------------------


def create_app(
    store_root: str | Path,
    cors_origins: Sequence[str] = (),
    ui_dir: Optional[str | Path] = None,
) -> FastAPI:
    store = Store(store_root)
    app = FastAPI(title="storywrangler", docs_url=None, redoc_url=None)

    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["GET"],
            allow_headers=["*"],
        )

    def json_response(payload, status: int = 200) -> Response:
        return Response(
            content=render_json(payload),
            status_code=status,
            media_type="application/json",
        )

    def error_response(exc: ApiError) -> Response:
        return json_response({"error": exc.message}, status=exc.status)

    def require(params, name: str) -> str:
        value = params.get(name)
        if value is None:
            raise ApiError(400, f"missing required parameter {name!r}")
        return value

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        return error_response(exc)

    @app.exception_handler(StoreError)
    async def _store_error(_request, exc: StoreError):
        status = 404 if isinstance(exc, CellNotFoundError) else 500
        return json_response({"error": str(exc)}, status=status)

    @app.get("/api/languages")
    def get_languages():
        return json_response(languages_payload(store))

    def _timeseries(request: Request) -> dict:
        params = request.query_params
        ngrams = params.getlist("q")
        n = params.get("n")
        scale = params.get("scale")
        return timeseries_payload(
            store,
            ngrams=ngrams,
            language=require(params, "lang"),
            start=_parse_date(require(params, "from"), "from"),
            end=_parse_date(require(params, "to"), "to"),
            metric=params.get("metric", "rank"),
            rt_included=_parse_bool(params.get("rt", "true"), "rt"),
            n=_parse_n(n) if n is not None else None,
            scale=scale,
        )

    @app.get("/api/timeseries")
    def get_timeseries(request: Request):
        return json_response(_timeseries(request))

    @app.get("/api/timeseries.csv")
    def get_timeseries_csv(request: Request):
        payload = _timeseries(request)
        return Response(
            content=timeseries_csv(payload).encode("utf-8"),
            media_type="text/csv; charset=utf-8",
            headers={
                "Content-Disposition": 'attachment; filename="timeseries.csv"'
            },
        )

    @app.get("/api/zipf")
    def get_zipf(request: Request):
        params = request.query_params
        page_size = params.get("page_size", str(MAX_ZIPF_PAGE))
        try:
            size = int(page_size)
        except ValueError:
            raise ApiError(400, f"bad page_size {page_size!r}")
        return json_response(
            zipf_page_payload(
                store,
                language=require(params, "lang"),
                n=_parse_n(require(params, "n")),
                day=_parse_date(require(params, "date"), "date"),
                cursor=params.get("cursor"),
                page_size=size,
            )
        )

    def _policy_from_params(params, language: str) -> FilterPolicy:
        def flag(name: str, default: bool) -> bool:
            raw = params.get(name)
            return default if raw is None else _parse_bool(raw, name)

        return FilterPolicy(
            drop_links=flag("drop_links", True),
            drop_handles=flag("drop_handles", True),
            drop_emojis=flag("drop_emojis", True),
            drop_stopwords=flag("drop_stopwords", True),
            keep_hashtags=flag("keep_hashtags", True),
            stopword_list=stopwords(language),
        )

    @app.get("/api/trending")
    def get_trending(request: Request):
        params = request.query_params
        language = require(params, "lang")
        try:
            k = int(params.get("k", str(DEFAULT_TOP_K)))
            alpha = float(params.get("alpha", str(DEFAULT_ALPHA)))
        except ValueError:
            raise ApiError(400, "bad k or alpha")
        return json_response(
            trending_payload(
                store,
                language=language,
                n=_parse_n(require(params, "n")),
                day=_parse_date(require(params, "date"), "date"),
                k=k,
                alpha=alpha,
                policy=_policy_from_params(params, language),
            )
        )

    @app.get("/api/contagiogram")
    def get_contagiogram(request: Request):
        params = request.query_params
        try:
            window = int(params.get("window", "30"))
        except ValueError:
            raise ApiError(400, f"bad window {params.get('window')!r}")
        ngram = require(params, "q")
        return json_response(
            build_contagiogram_payload(
                store,
                ngram=ngram,
                language=require(params, "lang"),
                n=infer_n(ngram),
                start=_parse_date(require(params, "from"), "from"),
                end=_parse_date(require(params, "to"), "to"),
                smoothing_window=window,
            )
        )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
