"""Narratively trending n-grams via rank-turbulence divergence.

A day's distribution is compared against the distribution from 364 days
earlier (52 weeks, so weekdays align and weekly periodicity cancels).
Each n-gram in the union of both lexicons contributes

    |r_now^(-alpha) - r_ref^(-alpha)| ** (1 / (alpha + 1))

with alpha = 1/4 by default and absent ranks entering as r^(-alpha) = 0
(the rank-to-infinity limit).  The constant prefactor (alpha+1)/alpha of
the summed divergence is dropped: it cannot change the ordering.

The trending list keeps the n-grams elevated on the query day (today's
inverse-rank contribution at least the reference's, so every entry has
a rank today), filters out links, handles, emoji and stopwords while
keeping hashtags, sorts by contribution with lexicographic tie-break,
and annotates each survivor with its single-day relative amplification
on a log10 scale.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from datetime import date, timedelta
from functools import lru_cache
from math import log10
from typing import Optional

from .measures import day_relative_amplification
from .store import CellNotFoundError, Store
from .tokenizer import TokenClass, tokenize

DEFAULT_ALPHA = 0.25
DEFAULT_TOP_K = 20
REFERENCE_OFFSET_DAYS = 364


@lru_cache(maxsize=None)
def stopwords(language: str) -> frozenset[str]:
    """Stopword lexicon for a language code; empty when none is shipped."""
    resource = importlib.resources.files("storywrangler.data.stopwords")
    path = resource / f"{language}.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        return frozenset()
    return frozenset(
        w.strip().lower() for w in text.splitlines() if w.strip()
    )


@dataclass(frozen=True)
class FilterPolicy:
    """Which token classes to exclude from trending lists.

    Hashtag keeping overrides the other drops for hashtag-class tokens.
    An n-gram is kept only if none of its component tokens violates the
    policy; the stopword test is case-insensitive.
    """

    drop_links: bool = True
    drop_handles: bool = True
    drop_emojis: bool = True
    drop_stopwords: bool = True
    keep_hashtags: bool = True
    stopword_list: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def for_language(cls, language: str, **overrides) -> "FilterPolicy":
        return cls(stopword_list=stopwords(language), **overrides)


@dataclass(frozen=True)
class TrendingEntry:
    ngram: str
    rtd: float
    rank_today: float
    rank_reference: Optional[float]
    log10_rel_amp: Optional[float]


def inverse_rank_power(rank: Optional[float], alpha: float) -> float:
    """r^(-alpha) with the absent-rank limit r -> infinity giving 0."""
    if rank is None:
        return 0.0
    if rank <= 0:
        raise ValueError(f"rank must be positive, got {rank!r}")
    return rank ** (-alpha)


def rtd_contribution(
    r_now: Optional[float],
    r_ref: Optional[float],
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """One n-gram's rank-turbulence divergence contribution (no prefactor)."""
    if r_now is None and r_ref is None:
        raise ValueError("both ranks absent")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return abs(
        inverse_rank_power(r_now, alpha) - inverse_rank_power(r_ref, alpha)
    ) ** (1.0 / (alpha + 1.0))


def apply_filter(ngram: str, policy: FilterPolicy) -> bool:
    """True (keep) iff no component token of the n-gram violates the policy."""
    for token in tokenize(ngram):
        cls = token.cls
        if cls is TokenClass.HASHTAG:
            if not policy.keep_hashtags:
                return False
            continue  # keeping hashtags overrides the other drops
        if cls is TokenClass.URL and policy.drop_links:
            return False
        if cls is TokenClass.HANDLE and policy.drop_handles:
            return False
        if cls is TokenClass.EMOJI and policy.drop_emojis:
            return False
        if (
            cls is TokenClass.WORD
            and policy.drop_stopwords
            and token.text.lower() in policy.stopword_list
        ):
            return False
    return True


def narratively_trending(
    store: Store,
    day: date,
    language: str,
    n: int,
    k: int = DEFAULT_TOP_K,
    policy: Optional[FilterPolicy] = None,
    alpha: float = DEFAULT_ALPHA,
) -> list[TrendingEntry]:
    """Top-k n-grams by divergence against the day 52 weeks earlier.

    Both cells must exist; a missing one raises
    :class:`~storywrangler.store.CellNotFoundError` naming it.
    """
    if policy is None:
        policy = FilterPolicy.for_language(language)
    ref_day = day - timedelta(days=REFERENCE_OFFSET_DAYS)
    if not store.has_cell(day, language, n):
        raise CellNotFoundError(f"no cell for {day} {language} {n}-grams")
    if not store.has_cell(ref_day, language, n):
        raise CellNotFoundError(
            f"missing reference cell for {ref_day} {language} {n}-grams"
            f" (52 weeks before {day})"
        )
    today = store.get_day(day, language, n)
    reference = store.get_day(ref_day, language, n)
    ranks_now = dict(zip(today.ngrams, today.r_at.tolist()))
    ranks_ref = dict(zip(reference.ngrams, reference.r_at.tolist()))

    exponent = 1.0 / (alpha + 1.0)
    scored: list[tuple[float, str, float, Optional[float]]] = []
    for g, r_now in ranks_now.items():
        r_ref = ranks_ref.get(g)
        x_now = r_now ** (-alpha)
        x_ref = 0.0 if r_ref is None else r_ref ** (-alpha)
        if x_now < x_ref:
            continue  # declined since the reference day: not trending now
        scored.append(((x_now - x_ref) ** exponent, g, r_now, r_ref))
    # n-grams only in the reference lexicon have no rank today and are
    # by definition not elevated now, so the union reduces to today's side.

    scored.sort(key=lambda item: (-item[0], item[1]))
    out: list[TrendingEntry] = []
    for rtd, g, r_now, r_ref in scored:
        if len(out) >= k:
            break
        if not apply_filter(g, policy):
            continue
        rel = day_relative_amplification(store, g, language, n, day)
        out.append(
            TrendingEntry(
                ngram=g,
                rtd=rtd,
                rank_today=r_now,
                rank_reference=r_ref,
                log10_rel_amp=log10(rel) if rel is not None and rel > 0 else None,
            )
        )
    return out
