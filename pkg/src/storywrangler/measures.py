"""Time-series analytics over the store: series extraction, rolling means,
reshare balance, relative amplification, and full contagiogram payloads.

Monthly aggregates are ratios of summed counts, not means of daily
ratios, so low-volume days cannot dominate.  Undefined values (zero
denominators, n-grams absent across a window) are first-class: they are
carried as None and rendered as gaps, never imputed.
"""

from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Optional, Sequence

import numpy as np

from .store import Store
from .zipf import NgramRecord

METRICS = ("rank", "freq", "count")
SCOPES = ("AT", "OT", "RT")

# n-gram RT share over calendar-month windows; strictly above this
# marks the month as amplified.
AMPLIFIED_THRESHOLD = 0.5


@dataclass
class TimeSeries:
    """Per-date values for one n-gram; gap-free over the query range."""

    ngram: str
    language: str
    n: int
    metric: str
    scope: str
    points: list[tuple[date, Optional[float]]]

    def dates(self) -> list[date]:
        return [d for d, _ in self.points]

    def values(self) -> list[Optional[float]]:
        return [v for _, v in self.points]


@dataclass
class WeekBand:
    """Min/max rank observed within one ISO week of the query range."""

    iso_year: int
    iso_week: int
    min_rank: Optional[float]
    max_rank: Optional[float]


@dataclass
class MonthBalance:
    """Month-aggregated RT share of an n-gram, with amplification flag."""

    year: int
    month: int
    value: Optional[float]
    amplified: bool


@dataclass
class HeatmapCell:
    """Relative amplification for one (month, weekday) aggregation cell."""

    year: int
    month: int
    weekday: int  # 0 = Monday .. 6 = Sunday
    value: Optional[float]


@dataclass
class ContagiogramPayload:
    ngram: str
    language: str
    n: int
    start: date
    end: date
    rank_series: TimeSeries
    rank_smoothed: TimeSeries
    weekly_band: list[WeekBand]
    rt_balance: list[MonthBalance]
    rel_heatmap: list[HeatmapCell]


def _value_from_record(rec: Optional[NgramRecord], metric: str, scope: str):
    if rec is None:
        return None
    if metric == "rank":
        return {"AT": rec.r_at, "OT": rec.r_ot, "RT": rec.r_rt}[scope]
    if metric == "freq":
        return {"AT": rec.p_at, "OT": rec.p_ot, "RT": rec.p_rt}[scope]
    if metric == "count":
        return {"AT": rec.f_at, "OT": rec.f_ot, "RT": rec.f_rt}[scope]
    raise ValueError(f"unknown metric {metric!r}")


def series(
    store: Store,
    ngram: str,
    language: str,
    n: int,
    start: date,
    end: date,
    metric: str = "rank",
    scope: str = "AT",
) -> TimeSeries:
    """Per-date metric values drawn from stored records; absent stays absent."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    raw = store.get_series(ngram, language, n, start, end)
    points = [(d, _value_from_record(rec, metric, scope)) for d, rec in raw]
    return TimeSeries(
        ngram=ngram, language=language, n=n, metric=metric, scope=scope,
        points=points,
    )


def _month_days(year: int, month: int) -> tuple[date, date]:
    last = calendar.monthrange(year, month)[1]
    return date(year, month, 1), date(year, month, last)


def rt_balance(
    store: Store, ngram: str, language: str, n: int, year: int, month: int
) -> Optional[float]:
    """Fraction of the n-gram's month-total occurrences that were reshares.

    Ratio of summed counts over the calendar month; None when the
    n-gram does not appear at all that month.
    """
    first, last = _month_days(year, month)
    f_rt = 0
    f_at = 0
    for _, rec in store.get_series(ngram, language, n, first, last):
        if rec is not None:
            f_rt += rec.f_rt
            f_at += rec.f_at
    if f_at == 0:
        return None
    return f_rt / f_at


def is_amplified(balance: Optional[float]) -> bool:
    return balance is not None and balance > AMPLIFIED_THRESHOLD


def relative_amplification(
    store: Store,
    ngram: str,
    language: str,
    n: int,
    year: int,
    month: int,
    weekday: int,
) -> Optional[float]:
    """The n-gram's RT share over a month's given weekdays, divided by the
    whole-language RT share over the same days.

    None when the n-gram is absent on all such days or the language
    background has no reshares then.
    """
    if not 0 <= weekday <= 6:
        raise ValueError(f"weekday must be 0..6 (Mon..Sun), got {weekday!r}")
    first, last = _month_days(year, month)
    days = [
        first + timedelta(days=i)
        for i in range((last - first).days + 1)
        if (first + timedelta(days=i)).weekday() == weekday
    ]
    ngram_rt = ngram_at = 0
    bg_rt = bg_at = 0
    recs = dict(store.get_series(ngram, language, n, first, last))
    for d in days:
        totals = store.cell_totals(d, language, n)
        if totals is not None:
            bg_at += totals[0]
            bg_rt += totals[2]
        rec = recs.get(d)
        if rec is not None:
            ngram_at += rec.f_at
            ngram_rt += rec.f_rt
    if ngram_at == 0 or bg_at == 0 or bg_rt == 0:
        return None
    return (ngram_rt / ngram_at) / (bg_rt / bg_at)


def day_relative_amplification(
    store: Store, ngram: str, language: str, n: int, d: date
) -> Optional[float]:
    """Single-day relative amplification (the trending annotation window)."""
    totals = store.cell_totals(d, language, n)
    if totals is None or totals[0] == 0 or totals[2] == 0:
        return None
    recs = store.get_series(ngram, language, n, d, d)
    rec = recs[0][1]
    if rec is None or rec.f_at == 0:
        return None
    return (rec.f_rt / rec.f_at) / (totals[2] / totals[0])


def rolling_mean(
    ts: TimeSeries, window_days: int, centered: bool = True
) -> TimeSeries:
    """Mean of present values in a day window around each point.

    The centered window for index i spans [i - w//2, i + (w-1)//2] and
    is truncated at the range edges; a window with no present values
    yields an absent point.  Absent neighbors never drag the mean; they
    are skipped.
    """
    if window_days < 1:
        raise ValueError(f"window_days must be >= 1, got {window_days!r}")
    values = np.array(
        [math.nan if v is None else float(v) for _, v in ts.points], dtype=np.float64
    )
    n = len(values)
    present = ~np.isnan(values)
    filled = np.where(present, values, 0.0)
    sums = np.concatenate(([0.0], np.cumsum(filled)))
    counts = np.concatenate(([0], np.cumsum(present.astype(np.int64))))
    if centered:
        lo_off, hi_off = window_days // 2, (window_days - 1) // 2
    else:
        lo_off, hi_off = window_days - 1, 0
    idx = np.arange(n)
    lo = np.maximum(idx - lo_off, 0)
    hi = np.minimum(idx + hi_off, n - 1)
    window_counts = counts[hi + 1] - counts[lo]
    window_sums = sums[hi + 1] - sums[lo]
    out_points: list[tuple[date, Optional[float]]] = []
    for i, (d, _) in enumerate(ts.points):
        if window_counts[i] == 0:
            out_points.append((d, None))
        else:
            out_points.append((d, float(window_sums[i] / window_counts[i])))
    return TimeSeries(
        ngram=ts.ngram, language=ts.language, n=ts.n, metric=ts.metric,
        scope=ts.scope, points=out_points,
    )


def weekly_band(ts: TimeSeries) -> list[WeekBand]:
    """Min/max of present values per ISO week, one band per week in range."""
    bands: dict[tuple[int, int], list[float]] = {}
    order: list[tuple[int, int]] = []
    for d, v in ts.points:
        key = d.isocalendar()[:2]
        if key not in bands:
            bands[key] = []
            order.append(key)
        if v is not None:
            bands[key].append(v)
    return [
        WeekBand(
            iso_year=y,
            iso_week=w,
            min_rank=min(bands[(y, w)]) if bands[(y, w)] else None,
            max_rank=max(bands[(y, w)]) if bands[(y, w)] else None,
        )
        for y, w in order
    ]


def _months_in_range(start: date, end: date) -> list[tuple[int, int]]:
    months = []
    y, m = start.year, start.month
    while (y, m) <= (end.year, end.month):
        months.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return months


def contagiogram(
    store: Store,
    ngram: str,
    language: str,
    n: int,
    start: date,
    end: date,
    smoothing_window: int = 30,
) -> ContagiogramPayload:
    """Assemble the three-panel amplification payload for one n-gram.

    Undefined cells propagate as None without failing the payload.
    """
    if start > end:
        raise ValueError(f"date range not well-ordered: {start} > {end}")
    rank_series = series(store, ngram, language, n, start, end, "rank", "AT")
    months = _months_in_range(start, end)
    return ContagiogramPayload(
        ngram=ngram,
        language=language,
        n=n,
        start=start,
        end=end,
        rank_series=rank_series,
        rank_smoothed=rolling_mean(rank_series, smoothing_window, centered=True),
        weekly_band=weekly_band(rank_series),
        rt_balance=[
            MonthBalance(
                year=y, month=m,
                value=(bal := rt_balance(store, ngram, language, n, y, m)),
                amplified=is_amplified(bal),
            )
            for y, m in months
        ],
        rel_heatmap=[
            HeatmapCell(
                year=y, month=m, weekday=wd,
                value=relative_amplification(store, ngram, language, n, y, m, wd),
            )
            for y, m in months
            for wd in range(7)
        ],
    )
