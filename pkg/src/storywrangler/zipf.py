"""Daily Zipf distributions: normalized frequencies, fractional ranks, truncation.

For one (date, language, n) cell the distribution holds, per n-gram,
raw counts for all content (``f_at``), organic-only (``f_ot``) and
reshared-only (``f_rt``), the normalized frequencies obtained by
dividing by the full-lexicon totals, and tied (fractional) ranks.
Ranks are computed per scope over that scope's lexicon only: an n-gram
never seen in reshares has no RT rank, recorded as an absent marker
rather than a fabricated value.

Ranks and probabilities are always computed against the full,
untruncated lexicon; truncation to the top entries by ``f_at`` happens
last and only drops records.  Stored ordering is descending ``f_at``
with bytewise-lexicographic tie-break.

The TSV serialization is one file per cell with the fixed header

    ngram\tcount\tcount_no_rt\trank\trank_no_rt\tfreq\tfreq_no_rt

frequencies at 12 significant digits and absent ranks as empty fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import BucketKey, DayCounts

DEFAULT_TRUNCATE_AT = 1_000_000

_HEADER = "ngram\tcount\tcount_no_rt\trank\trank_no_rt\tfreq\tfreq_no_rt"


@dataclass(frozen=True)
class NgramRecord:
    """One n-gram's counts, normalized frequencies and fractional ranks."""

    ngram: str
    f_at: int
    f_ot: int
    f_rt: int
    p_at: float
    p_ot: float
    p_rt: float
    r_at: float
    r_ot: Optional[float]
    r_rt: Optional[float]


def fractional_ranks(freqs: Sequence[int]) -> list[float]:
    """Ranks 1..N by descending frequency; ties get the mean of their positions.

    Output is aligned to input order.
    """
    return fractional_rank_array(np.asarray(freqs, dtype=np.int64)).tolist()


def fractional_rank_array(freqs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`fractional_ranks` over an integer array."""
    n = len(freqs)
    if n == 0:
        return np.empty(0, dtype=np.float64)
    order = np.argsort(-freqs.astype(np.int64), kind="stable")
    sorted_vals = freqs[order]
    # Group boundaries among equal values; each group's rank is the mean
    # of the 1-based positions it spans, exact in float64.
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    group_ranks = (starts + 1 + ends) / 2.0
    ranks_sorted = np.repeat(group_ranks, ends - starts)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = ranks_sorted
    return ranks


@dataclass
class DailyZipf:
    """Ranked, normalized, optionally truncated distribution for one cell.

    Column-oriented: ``ngrams[i]`` pairs with the i-th element of each
    array.  Rows are ordered by (f_at descending, ngram ascending).
    Absent ranks are NaN in the arrays and None on :class:`NgramRecord`
    views.  ``rt_tail_freqs`` preserves the RT-frequency histogram of
    truncated-away records so RT ranks of survivors stay exactly
    reconstructible after persistence.
    """

    bucket: BucketKey
    n: int
    ngrams: list[str]
    f_at: np.ndarray
    f_ot: np.ndarray
    f_rt: np.ndarray
    p_at: np.ndarray
    p_ot: np.ndarray
    p_rt: np.ndarray
    r_at: np.ndarray
    r_ot: np.ndarray
    r_rt: np.ndarray
    truncated: bool
    total_at: int
    total_ot: int
    total_rt: int
    rt_tail_freqs: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ngrams)

    def record(self, i: int) -> NgramRecord:
        r_ot = self.r_ot[i]
        r_rt = self.r_rt[i]
        return NgramRecord(
            ngram=self.ngrams[i],
            f_at=int(self.f_at[i]),
            f_ot=int(self.f_ot[i]),
            f_rt=int(self.f_rt[i]),
            p_at=float(self.p_at[i]),
            p_ot=float(self.p_ot[i]),
            p_rt=float(self.p_rt[i]),
            r_at=float(self.r_at[i]),
            r_ot=None if math.isnan(r_ot) else float(r_ot),
            r_rt=None if math.isnan(r_rt) else float(r_rt),
        )

    @property
    def records(self) -> list[NgramRecord]:
        return [self.record(i) for i in range(len(self.ngrams))]

    def index_of(self, ngram: str) -> Optional[int]:
        try:
            return self.ngrams.index(ngram)
        except ValueError:
            return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DailyZipf):
            return NotImplemented
        return (
            self.bucket == other.bucket
            and self.n == other.n
            and self.ngrams == other.ngrams
            and self.truncated == other.truncated
            and (self.total_at, self.total_ot, self.total_rt)
            == (other.total_at, other.total_ot, other.total_rt)
            and self.rt_tail_freqs == other.rt_tail_freqs
            and all(
                np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                for f in ("f_at", "f_ot", "f_rt", "p_at", "p_ot", "p_rt",
                          "r_at", "r_ot", "r_rt")
            )
        )


def build_daily_zipf(
    dc: DayCounts, truncate_at: int = DEFAULT_TRUNCATE_AT
) -> DailyZipf:
    """Rank and normalize one cell's exact counts.

    Probabilities use full-lexicon totals per scope with 0/0 -> 0; ranks
    are computed per scope before sorting and truncation.
    """
    keys = sorted(dc.ot.keys() | dc.rt.keys())
    if not keys:
        raise ValueError(f"empty DayCounts for {dc.bucket} n={dc.n}")
    ot_get = dc.ot.get
    rt_get = dc.rt.get
    f_ot = np.fromiter((ot_get(k, 0) for k in keys), dtype=np.int64, count=len(keys))
    f_rt = np.fromiter((rt_get(k, 0) for k in keys), dtype=np.int64, count=len(keys))
    f_at = f_ot + f_rt
    if not (f_at > 0).all():
        raise ValueError("DayCounts contains zero-count n-grams")

    total_at = int(f_at.sum())
    total_ot = int(f_ot.sum())
    total_rt = int(f_rt.sum())
    p_at = f_at / total_at
    p_ot = f_ot / total_ot if total_ot > 0 else np.zeros(len(keys))
    p_rt = f_rt / total_rt if total_rt > 0 else np.zeros(len(keys))

    r_at = fractional_rank_array(f_at)
    r_ot = np.full(len(keys), np.nan)
    in_ot = f_ot > 0
    if in_ot.any():
        r_ot[in_ot] = fractional_rank_array(f_ot[in_ot])
    r_rt = np.full(len(keys), np.nan)
    in_rt = f_rt > 0
    if in_rt.any():
        r_rt[in_rt] = fractional_rank_array(f_rt[in_rt])

    # keys are already lexicographically ascending, so a stable sort on
    # descending f_at yields the (f_at desc, ngram asc) presentation order.
    order = np.argsort(-f_at, kind="stable")
    truncated = len(keys) > truncate_at
    kept = order[:truncate_at]
    rt_tail_freqs: dict[int, int] = {}
    if truncated:
        tail_rt = f_rt[order[truncate_at:]]
        tail_rt = tail_rt[tail_rt > 0]
        vals, counts = np.unique(tail_rt, return_counts=True)
        rt_tail_freqs = {int(v): int(c) for v, c in zip(vals, counts)}

    return DailyZipf(
        bucket=dc.bucket,
        n=dc.n,
        ngrams=[keys[i] for i in kept],
        f_at=f_at[kept],
        f_ot=f_ot[kept],
        f_rt=f_rt[kept],
        p_at=p_at[kept],
        p_ot=p_ot[kept],
        p_rt=p_rt[kept],
        r_at=r_at[kept],
        r_ot=r_ot[kept],
        r_rt=r_rt[kept],
        truncated=truncated,
        total_at=total_at,
        total_ot=total_ot,
        total_rt=total_rt,
        rt_tail_freqs=rt_tail_freqs,
    )


def format_freq(p: float) -> str:
    """12-significant-digit decimal serialization, e.g. 1.0 -> 1.00000000000."""
    return format(p, "#.12g")


def format_rank(r: float) -> str:
    """Integral ranks print as integers, tied means keep their .5."""
    return str(int(r)) if r == int(r) else repr(float(r))


def zipf_to_rows(z: DailyZipf) -> list[str]:
    """Header plus one TSV row per record (no trailing newlines)."""
    rows = [_HEADER]
    append = rows.append
    r_ot = z.r_ot
    for i, g in enumerate(z.ngrams):
        if "\t" in g or "\n" in g:
            raise AssertionError(f"n-gram contains TSV delimiter: {g!r}")
        ro = r_ot[i]
        append(
            f"{g}\t{z.f_at[i]}\t{z.f_ot[i]}"
            f"\t{format_rank(z.r_at[i])}"
            f"\t{'' if math.isnan(ro) else format_rank(ro)}"
            f"\t{format_freq(z.p_at[i])}"
            f"\t{format_freq(z.p_ot[i])}"
        )
    return rows


@dataclass(frozen=True)
class RowData:
    """Parsed fields of one TSV row (the persisted projection of a record)."""

    ngram: str
    f_at: int
    f_ot: int
    r_at: float
    r_ot: Optional[float]
    p_at: float
    p_ot: float


def rows_to_data(rows: Iterable[str]) -> list[RowData]:
    """Inverse of :func:`zipf_to_rows` for the row-level fields."""
    it = iter(rows)
    try:
        header = next(it)
    except StopIteration:
        raise ValueError("no header row")
    if header != _HEADER:
        raise ValueError(f"bad header: {header!r}")
    out = []
    for lineno, row in enumerate(it, start=2):
        parts = row.split("\t")
        if len(parts) != 7:
            raise ValueError(f"row {lineno}: expected 7 columns, got {len(parts)}")
        g, c, c_ot, r, r_ot, p, p_ot = parts
        out.append(
            RowData(
                ngram=g,
                f_at=int(c),
                f_ot=int(c_ot),
                r_at=float(r),
                r_ot=float(r_ot) if r_ot else None,
                p_at=float(p),
                p_ot=float(p_ot),
            )
        )
    return out


def tsv_header() -> str:
    return _HEADER
