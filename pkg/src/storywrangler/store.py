"""File-backed store for daily Zipf distributions with dual access paths.

Layout under one root directory::

    {lang}/{n}gram/{YYYY-MM-DD}.tsv        one distribution per cell
    {lang}/{n}gram/{YYYY-MM-DD}.meta.json  totals, truncation, checksum
    {lang}/{n}gram/.series.idx             binary time-series index
    .manifest.jsonl                        per-file checksums, append-only

The TSV day files answer whole-day reads; the sidecar index answers
per-n-gram time-series reads without touching the day files.  The index
is derived data: it can always be rebuilt from the day files, and it is
self-healing (days present on disk but missing from the index are
re-indexed on open).

Index format (documented in docs/store.md): an 8-byte file magic, then
one run per stored day.  A run is a fixed header (day ordinal, entry
count, string-blob length, the day's three totals, CRC32) followed by a
hash-sorted array of fixed-width entries and a UTF-8 string blob.
Lookups binary-search each run by an 8-byte BLAKE2b n-gram hash and
confirm the actual string, so answers are exact even under hash
collisions.  Damaged or half-appended trailing runs fail their CRC and
are ignored, then repaired from the day files.

Writers use write-to-temp-then-rename so readers never observe partial
cells; one writer per cell, any number of concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import zlib
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .ingest import BucketKey
from .zipf import (
    DailyZipf,
    NgramRecord,
    fractional_rank_array,
    rows_to_data,
    tsv_header,
    zipf_to_rows,
)

_FILE_MAGIC = b"SWIDX001"
_RUN_MAGIC = b"RUN!"
_RUN_HEADER = struct.Struct("<4sIIIQQQI")
_ENTRY_DTYPE = np.dtype(
    [
        ("hash", "<u8"),
        ("str_off", "<u4"),
        ("str_len", "<u4"),
        ("row_off", "<u8"),
        ("f_at", "<u8"),
        ("f_ot", "<u8"),
        ("r_at", "<f8"),
        ("r_ot", "<f8"),
        ("r_rt", "<f8"),
    ]
)

_VALID_N = (1, 2, 3)


class StoreError(Exception):
    """Base class for store failures."""


class CellExistsError(StoreError):
    """Attempt to overwrite an existing (date, language, n) cell."""


class CellNotFoundError(StoreError):
    """Requested (date, language, n) cell does not exist."""


class IntegrityError(StoreError):
    """A stored file does not match its recorded invariants."""


def ngram_hash(ngram: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(ngram.encode("utf-8"), digest_size=8).digest(), "little"
    )


@dataclass(frozen=True)
class LanguageCoverage:
    code: str
    earliest_date: date
    latest_date: date
    day_count: int


@dataclass
class _Run:
    """One day's decoded index run."""

    day: date
    total_at: int
    total_ot: int
    total_rt: int
    hashes: np.ndarray
    entries: np.ndarray
    strings: bytes

    def lookup(self, ngram: str, h: int) -> Optional[np.void]:
        i = int(np.searchsorted(self.hashes, h))
        raw = ngram.encode("utf-8")
        while i < len(self.hashes) and self.hashes[i] == h:
            e = self.entries[i]
            off = int(e["str_off"])
            if self.strings[off : off + int(e["str_len"])] == raw:
                return e
            i += 1
        return None


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _parse_cell_date(stem: str) -> date:
    return date.fromisoformat(stem)


class Store:
    """Persisted daily Zipf distributions under one root directory."""

    def __init__(self, root: os.PathLike | str):
        self.root = Path(root)
        self._index_cache: dict[tuple[str, int], dict[date, _Run]] = {}

    # -- paths -------------------------------------------------------------

    def _cell_dir(self, language: str, n: int) -> Path:
        if n not in _VALID_N:
            raise ValueError(f"n must be one of {_VALID_N}, got {n!r}")
        return self.root / language / f"{n}gram"

    def _tsv_path(self, d: date, language: str, n: int) -> Path:
        return self._cell_dir(language, n) / f"{d.isoformat()}.tsv"

    def _meta_path(self, d: date, language: str, n: int) -> Path:
        return self._cell_dir(language, n) / f"{d.isoformat()}.meta.json"

    def _index_path(self, language: str, n: int) -> Path:
        return self._cell_dir(language, n) / ".series.idx"

    def _manifest_path(self) -> Path:
        return self.root / ".manifest.jsonl"

    # -- write path ---------------------------------------------------------

    def put_day(self, z: DailyZipf, overwrite: bool = False) -> None:
        """Persist one cell atomically and index every stored n-gram."""
        d, language, n = z.bucket.date, z.bucket.language, z.n
        tsv_path = self._tsv_path(d, language, n)
        if tsv_path.exists() and not overwrite:
            raise CellExistsError(f"cell already exists: {tsv_path}")
        cell_dir = self._cell_dir(language, n)
        cell_dir.mkdir(parents=True, exist_ok=True)

        rows = zipf_to_rows(z)
        row_bytes = [(r + "\n").encode("utf-8") for r in rows]
        tsv_data = b"".join(row_bytes)
        # Byte offset of each data row, for the record-offset index field.
        offsets = np.cumsum([len(b) for b in row_bytes[:-1]], dtype=np.uint64)

        meta = {
            "date": d.isoformat(),
            "language": language,
            "n": n,
            "row_count": len(z),
            "total_at": z.total_at,
            "total_ot": z.total_ot,
            "total_rt": z.total_rt,
            "truncated": z.truncated,
            "rt_tail_freqs": {str(k): v for k, v in sorted(z.rt_tail_freqs.items())},
            "tsv_sha256": hashlib.sha256(tsv_data).hexdigest(),
        }
        meta_data = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()

        _atomic_write(self._meta_path(d, language, n), meta_data)
        _atomic_write(tsv_path, tsv_data)
        self._append_manifest(
            [
                (tsv_path, meta["tsv_sha256"]),
                (self._meta_path(d, language, n), hashlib.sha256(meta_data).hexdigest()),
            ]
        )

        run_blob = self._encode_run(z, offsets)
        index_path = self._index_path(language, n)
        if overwrite and index_path.exists():
            # Drop any stale run for this date, then rewrite atomically.
            runs_raw = self._read_raw_runs(index_path)
            kept = [blob for day, blob in runs_raw if day != d]
            _atomic_write(index_path, _FILE_MAGIC + b"".join(kept) + run_blob)
        else:
            with open(index_path, "ab") as f:
                if f.tell() == 0:
                    f.write(_FILE_MAGIC)
                f.write(run_blob)
        self._index_cache.pop((language, n), None)

    def _append_manifest(self, items: Iterable[tuple[Path, str]]) -> None:
        lines = []
        for path, digest in items:
            rel = path.relative_to(self.root).as_posix()
            lines.append(
                json.dumps({"path": rel, "sha256": digest}, sort_keys=True,
                           separators=(",", ":"))
            )
        with open(self._manifest_path(), "a", encoding="utf-8") as f:
            f.write("".join(line + "\n" for line in lines))

    def _encode_run(self, z: DailyZipf, row_offsets: np.ndarray) -> bytes:
        count = len(z)
        hashes = np.fromiter(
            (ngram_hash(g) for g in z.ngrams), dtype=np.uint64, count=count
        )
        raw = [g.encode("utf-8") for g in z.ngrams]
        lengths = np.fromiter((len(b) for b in raw), dtype=np.uint64, count=count)
        str_offs = np.zeros(count, dtype=np.uint64)
        if count > 1:
            str_offs[1:] = np.cumsum(lengths[:-1])
        entries = np.empty(count, dtype=_ENTRY_DTYPE)
        entries["hash"] = hashes
        entries["str_off"] = str_offs
        entries["str_len"] = lengths
        entries["row_off"] = row_offsets
        entries["f_at"] = z.f_at
        entries["f_ot"] = z.f_ot
        entries["r_at"] = z.r_at
        entries["r_ot"] = z.r_ot
        entries["r_rt"] = z.r_rt
        order = np.argsort(entries["hash"], kind="stable")
        entries = entries[order]
        payload = entries.tobytes() + b"".join(raw)
        header = _RUN_HEADER.pack(
            _RUN_MAGIC,
            z.bucket.date.toordinal(),
            count,
            int(lengths.sum()),
            z.total_at,
            z.total_ot,
            z.total_rt,
            zlib.crc32(payload),
        )
        return header + payload

    # -- index read path ----------------------------------------------------

    def _read_raw_runs(self, path: Path) -> list[tuple[date, bytes]]:
        """Raw (date, run blob) pairs; CRC-invalid or truncated tails are dropped."""
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return []
        if not data.startswith(_FILE_MAGIC):
            return []
        out = []
        pos = len(_FILE_MAGIC)
        while pos + _RUN_HEADER.size <= len(data):
            magic, day_ord, count, strings_len, _, _, _, crc = _RUN_HEADER.unpack_from(
                data, pos
            )
            if magic != _RUN_MAGIC:
                break
            payload_len = count * _ENTRY_DTYPE.itemsize + strings_len
            end = pos + _RUN_HEADER.size + payload_len
            if end > len(data):
                break
            payload = data[pos + _RUN_HEADER.size : end]
            if zlib.crc32(payload) != crc:
                break
            out.append((date.fromordinal(day_ord), data[pos:end]))
            pos = end
        return out

    def _decode_run(self, blob: bytes) -> _Run:
        _, day_ord, count, strings_len, t_at, t_ot, t_rt, _ = _RUN_HEADER.unpack_from(
            blob, 0
        )
        body = blob[_RUN_HEADER.size :]
        entries = np.frombuffer(body, dtype=_ENTRY_DTYPE, count=count)
        strings = body[count * _ENTRY_DTYPE.itemsize :]
        return _Run(
            day=date.fromordinal(day_ord),
            total_at=t_at,
            total_ot=t_ot,
            total_rt=t_rt,
            hashes=entries["hash"],
            entries=entries,
            strings=strings,
        )

    def _load_index(self, language: str, n: int) -> dict[date, _Run]:
        key = (language, n)
        cached = self._index_cache.get(key)
        if cached is not None:
            return cached
        path = self._index_path(language, n)
        runs: dict[date, _Run] = {}
        for day, blob in self._read_raw_runs(path):
            runs[day] = self._decode_run(blob)  # later run wins for a date
        missing = [d for d in self.dates(language, n) if d not in runs]
        if missing:
            # Self-heal: re-index days that exist on disk but not in the file.
            with open(path, "ab") as f:
                if f.tell() == 0:
                    f.write(_FILE_MAGIC)
                for d in missing:
                    z = self.get_day(d, language, n)
                    offsets = _row_offsets(zipf_to_rows(z))
                    blob = self._encode_run(z, offsets)
                    f.write(blob)
                    runs[d] = self._decode_run(blob)
        self._index_cache[key] = runs
        return runs

    def rebuild_index(self, language: str, n: int) -> int:
        """Regenerate the series index from day files; returns days indexed."""
        path = self._index_path(language, n)
        if path.exists():
            path.unlink()
        self._index_cache.pop((language, n), None)
        return len(self._load_index(language, n))

    # -- cell read path -----------------------------------------------------

    def dates(self, language: str, n: int) -> list[date]:
        cell_dir = self._cell_dir(language, n)
        if not cell_dir.is_dir():
            return []
        out = []
        for p in cell_dir.glob("*.tsv"):
            try:
                out.append(_parse_cell_date(p.stem))
            except ValueError:
                continue  # not a day cell
        return sorted(out)

    def has_cell(self, d: date, language: str, n: int) -> bool:
        return self._tsv_path(d, language, n).exists()

    def cell_totals(self, d: date, language: str, n: int) -> Optional[tuple[int, int, int]]:
        """(total_at, total_ot, total_rt) for a cell, or None when absent."""
        run = self._load_index(language, n).get(d)
        if run is None:
            return None
        return (run.total_at, run.total_ot, run.total_rt)

    def get_day(self, d: date, language: str, n: int) -> DailyZipf:
        """Load one cell, re-validating its invariants."""
        tsv_path = self._tsv_path(d, language, n)
        meta_path = self._meta_path(d, language, n)
        if not tsv_path.exists():
            raise CellNotFoundError(f"no cell for {d} {language} {n}-grams")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise IntegrityError(f"missing meta sidecar: {meta_path}")
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"corrupt meta sidecar {meta_path}: {exc}")
        tsv_data = tsv_path.read_bytes()
        if hashlib.sha256(tsv_data).hexdigest() != meta.get("tsv_sha256"):
            raise IntegrityError(f"checksum mismatch: {tsv_path}")

        text = tsv_data.decode("utf-8")
        if text.endswith("\n"):
            text = text[:-1]
        try:
            rows = rows_to_data(text.split("\n"))
        except ValueError as exc:
            raise IntegrityError(f"corrupt day file {tsv_path}: {exc}")
        if len(rows) != meta["row_count"]:
            raise IntegrityError(
                f"row count mismatch in {tsv_path}: "
                f"{len(rows)} rows vs meta {meta['row_count']}"
            )

        count = len(rows)
        ngrams = [r.ngram for r in rows]
        f_at = np.fromiter((r.f_at for r in rows), dtype=np.int64, count=count)
        f_ot = np.fromiter((r.f_ot for r in rows), dtype=np.int64, count=count)
        f_rt = f_at - f_ot
        r_at = np.fromiter((r.r_at for r in rows), dtype=np.float64, count=count)
        r_ot = np.fromiter(
            (math.nan if r.r_ot is None else r.r_ot for r in rows),
            dtype=np.float64,
            count=count,
        )
        total_at = meta["total_at"]
        total_ot = meta["total_ot"]
        total_rt = meta["total_rt"]
        truncated = bool(meta["truncated"])
        rt_tail = {int(k): int(v) for k, v in meta.get("rt_tail_freqs", {}).items()}

        self._validate_cell(tsv_path, ngrams, f_at, f_ot, f_rt, total_at, total_ot,
                            total_rt, truncated, r_at, r_ot)

        p_at = f_at / total_at if total_at > 0 else np.zeros(count)
        p_ot = f_ot / total_ot if total_ot > 0 else np.zeros(count)
        p_rt = f_rt / total_rt if total_rt > 0 else np.zeros(count)
        r_rt = _reconstruct_rt_ranks(f_rt, rt_tail)

        return DailyZipf(
            bucket=BucketKey(date=d, language=language),
            n=n,
            ngrams=ngrams,
            f_at=f_at,
            f_ot=f_ot,
            f_rt=f_rt,
            p_at=p_at,
            p_ot=p_ot,
            p_rt=p_rt,
            r_at=r_at,
            r_ot=r_ot,
            r_rt=r_rt,
            truncated=truncated,
            total_at=total_at,
            total_ot=total_ot,
            total_rt=total_rt,
            rt_tail_freqs=rt_tail,
        )

    def _validate_cell(self, path, ngrams, f_at, f_ot, f_rt, total_at, total_ot,
                       total_rt, truncated, r_at, r_ot) -> None:
        if len(ngrams) == 0:
            raise IntegrityError(f"empty day file: {path}")
        if (f_at <= 0).any() or (f_ot < 0).any() or (f_rt < 0).any():
            raise IntegrityError(f"negative or zero counters in {path}")
        # Strict presentation order: f_at descending, ngram ascending on ties.
        heads = f_at[:-1]
        tails = f_at[1:]
        if (tails > heads).any():
            raise IntegrityError(f"rows not sorted by descending count in {path}")
        ties = np.flatnonzero(tails == heads)
        for i in ties:
            if not ngrams[i] < ngrams[i + 1]:
                raise IntegrityError(f"tied rows out of lexicographic order in {path}")
        sum_at, sum_ot, sum_rt = int(f_at.sum()), int(f_ot.sum()), int(f_rt.sum())
        if truncated:
            ok = sum_at <= total_at and sum_ot <= total_ot and sum_rt <= total_rt
        else:
            ok = (sum_at, sum_ot, sum_rt) == (total_at, total_ot, total_rt)
        if not ok:
            raise IntegrityError(f"totals do not match stored rows in {path}")
        if not truncated:
            if not np.array_equal(fractional_rank_array(f_at), r_at):
                raise IntegrityError(f"all-content ranks inconsistent in {path}")
            in_ot = f_ot > 0
            expect_ot = np.full(len(ngrams), math.nan)
            if in_ot.any():
                expect_ot[in_ot] = fractional_rank_array(f_ot[in_ot])
            if not np.array_equal(expect_ot, r_ot, equal_nan=True):
                raise IntegrityError(f"organic-only ranks inconsistent in {path}")

    # -- series read path ---------------------------------------------------

    def get_series(
        self,
        ngram: str,
        language: str,
        n: int,
        start: date,
        end: date,
    ) -> list[tuple[date, Optional[NgramRecord]]]:
        """One entry per calendar date in [start, end]; absent days are None."""
        if start > end:
            raise ValueError(f"date range not well-ordered: {start} > {end}")
        runs = self._load_index(language, n)
        h = ngram_hash(ngram)
        out: list[tuple[date, Optional[NgramRecord]]] = []
        d = start
        one = timedelta(days=1)
        while d <= end:
            run = runs.get(d)
            entry = run.lookup(ngram, h) if run is not None else None
            if entry is None:
                out.append((d, None))
            else:
                out.append((d, _record_from_entry(ngram, entry, run)))
            d += one
        return out

    # -- coverage and integrity ----------------------------------------------

    def languages(self) -> list[LanguageCoverage]:
        """Coverage metadata per language partition, sorted by code."""
        if not self.root.is_dir():
            return []
        out = []
        for lang_dir in sorted(self.root.iterdir()):
            if not lang_dir.is_dir() or lang_dir.name.startswith("."):
                continue
            all_dates: set[date] = set()
            for n in _VALID_N:
                all_dates.update(self.dates(lang_dir.name, n))
            if not all_dates:
                continue
            out.append(
                LanguageCoverage(
                    code=lang_dir.name,
                    earliest_date=min(all_dates),
                    latest_date=max(all_dates),
                    day_count=len(all_dates),
                )
            )
        return out

    def verify_integrity(self) -> list[str]:
        """Check every manifest entry against the current tree; return problems."""
        manifest = self._manifest_path()
        problems = []
        expected: dict[str, str] = {}
        try:
            with open(manifest, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entry = json.loads(line)
                        expected[entry["path"]] = entry["sha256"]
        except FileNotFoundError:
            return ["missing manifest"] if any(self.root.glob("*/")) else []
        for rel, digest in sorted(expected.items()):
            path = self.root / rel
            if not path.exists():
                problems.append(f"missing file: {rel}")
            elif hashlib.sha256(path.read_bytes()).hexdigest() != digest:
                problems.append(f"checksum mismatch: {rel}")
        return problems


def _row_offsets(rows: list[str]) -> np.ndarray:
    lengths = [len((r + "\n").encode("utf-8")) for r in rows[:-1]]
    return np.cumsum(lengths, dtype=np.uint64)


def _reconstruct_rt_ranks(f_rt: np.ndarray, tail: dict[int, int]) -> np.ndarray:
    """Fractional RT ranks of surviving rows over the full RT lexicon.

    The full lexicon is the surviving rows with f_rt > 0 plus the
    truncated-away tail, known only through its frequency histogram.
    """
    out = np.full(len(f_rt), math.nan)
    mask = f_rt > 0
    if not mask.any() and not tail:
        return out
    surv = f_rt[mask]
    vals, counts = np.unique(surv, return_counts=True)
    merged: dict[int, int] = {int(v): int(c) for v, c in zip(vals, counts)}
    for v, c in tail.items():
        merged[v] = merged.get(v, 0) + c
    rank_by_val: dict[int, float] = {}
    position = 0
    for v in sorted(merged, reverse=True):
        g = merged[v]
        rank_by_val[v] = position + (g + 1) / 2.0
        position += g
    if mask.any():
        out[mask] = [rank_by_val[int(v)] for v in surv]
    return out


def _record_from_entry(ngram: str, entry: np.void, run: _Run) -> NgramRecord:
    f_at = int(entry["f_at"])
    f_ot = int(entry["f_ot"])
    f_rt = f_at - f_ot
    r_ot = float(entry["r_ot"])
    r_rt = float(entry["r_rt"])
    return NgramRecord(
        ngram=ngram,
        f_at=f_at,
        f_ot=f_ot,
        f_rt=f_rt,
        p_at=f_at / run.total_at if run.total_at else 0.0,
        p_ot=f_ot / run.total_ot if run.total_ot else 0.0,
        p_rt=f_rt / run.total_rt if run.total_rt else 0.0,
        r_at=float(entry["r_at"]),
        r_ot=None if math.isnan(r_ot) else r_ot,
        r_rt=None if math.isnan(r_rt) else r_rt,
    )
