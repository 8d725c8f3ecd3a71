"""Inverted index construction and BM25 top-m retrieval.

Scoring uses the Robertson BM25 formulation with the non-negative IDF
variant:

    score(q, d) = sum over query terms t of
        ln(1 + (N - df + 0.5) / (df + 0.5))
        * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))

Repeated query terms contribute once per instance by default (a flag
deduplicates them). Ties in score break by ascending doc_id. Documents with
score 0 are never returned.
"""

from __future__ import annotations

import heapq
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .textpipe import Corpus, FormatError

INDEX_MAGIC = b"HYIRINVX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be non-negative")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: int
    score: float


class InvertedIndex:
    """Immutable term -> posting-list index plus the corpus statistics BM25 needs."""

    def __init__(
        self,
        terms: list[str],
        postings: list[tuple[np.ndarray, np.ndarray]],
        doc_lengths: np.ndarray,
        ext_ids: list[str],
        params: Bm25Params = Bm25Params(),
    ):
        self.terms = terms
        self.term_ids = {t: i for i, t in enumerate(terms)}
        self.postings = postings  # term_id -> (doc_ids asc, tfs)
        self.doc_lengths = doc_lengths
        self.ext_ids = ext_ids
        self.params = params

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        return float(self.doc_lengths.mean()) if len(self.doc_lengths) else 0.0

    def document_frequency(self, term: str) -> int:
        tid = self.term_ids.get(term)
        return len(self.postings[tid][0]) if tid is not None else 0

    def idf(self, term: str) -> float:
        df = self.document_frequency(term)
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def term_frequency(self, term: str, doc_id: int) -> int:
        """tf of term in doc_id via binary search over its posting list."""
        tid = self.term_ids.get(term)
        if tid is None:
            return 0
        ids, tfs = self.postings[tid]
        pos = np.searchsorted(ids, doc_id)
        if pos < len(ids) and ids[pos] == doc_id:
            return int(tfs[pos])
        return 0

    def save(self, path: str | Path) -> None:
        save_index(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        return load_index(path)


def build_inverted_index(corpus: Corpus, params: Bm25Params = Bm25Params()) -> InvertedIndex:
    """Scan documents in doc_id order, appending each (term, doc) occurrence
    to the term's posting list. Postings come out sorted by doc_id for free."""
    acc: list[tuple[list[int], list[int]]] = [([], []) for _ in corpus.vocab.terms]
    tid = corpus.vocab.term_ids
    lengths = np.zeros(corpus.n_docs, dtype=np.int64)
    ext_ids = []
    for doc in corpus.docs:
        lengths[doc.doc_id] = doc.length
        ext_ids.append(doc.ext_id)
        for term, tf in sorted(Counter(doc.tokens).items()):
            ids, tfs = acc[tid[term]]
            ids.append(doc.doc_id)
            tfs.append(tf)
    postings = [
        (np.asarray(ids, dtype=np.int64), np.asarray(tfs, dtype=np.int64))
        for ids, tfs in acc
    ]
    return InvertedIndex(list(corpus.vocab.terms), postings, lengths, ext_ids, params)


def bm25_search(
    index: InvertedIndex,
    query_terms: Sequence[str],
    m: int,
    params: Bm25Params | None = None,
    dedupe_query_terms: bool = False,
) -> list[ScoredDoc]:
    """Top-m BM25 documents among those containing at least one query term.

    Document-at-a-time traversal over the union of the query postings.
    Returns fewer than m results iff fewer positive-score candidates exist.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if params is None:
        params = index.params
    if not query_terms:
        return []

    weights = Counter(query_terms)
    if dedupe_query_terms:
        weights = {t: 1 for t in weights}

    k1, b = params.k1, params.b
    avgdl = index.avgdl
    n = index.n_docs

    # one cursor per distinct matching query term
    cursors = []  # (posting doc_ids, tfs, weight * idf)
    for term, w in weights.items():
        tid = index.term_ids.get(term)
        if tid is None:
            continue
        ids, tfs = index.postings[tid]
        if len(ids) == 0:
            continue
        df = len(ids)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        cursors.append((ids, tfs, w * idf))
    if not cursors:
        return []

    heap = [(int(ids[0]), ci, 0) for ci, (ids, _, _) in enumerate(cursors)]
    heapq.heapify(heap)

    # top-m kept in a min-heap keyed (score, -doc_id) so the worst kept
    # element under the (score desc, doc_id asc) order sits at the root
    top: list[tuple[float, int]] = []
    while heap:
        doc_id = heap[0][0]
        score = 0.0
        while heap and heap[0][0] == doc_id:
            _, ci, pos = heapq.heappop(heap)
            ids, tfs, widf = cursors[ci]
            tf = float(tfs[pos])
            dl = float(index.doc_lengths[doc_id])
            score += widf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
            if pos + 1 < len(ids):
                heapq.heappush(heap, (int(ids[pos + 1]), ci, pos + 1))
        if score <= 0.0:
            continue
        entry = (score, -doc_id)
        if len(top) < m:
            heapq.heappush(top, entry)
        elif entry > top[0]:
            heapq.heapreplace(top, entry)

    out = sorted(top, key=lambda e: (-e[0], -e[1]))
    return [ScoredDoc(doc_id=-neg, score=s) for s, neg in out]


# --- varint helpers for the delta-coded on-disk postings ---------------------


def _write_varint(buf: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _read_varint(data: bytes, off: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = data[off]
        off += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, off
        shift += 7


# --- on-disk layout -----------------------------------------------------------
#
#   magic 'HYIRINVX', u32 version
#   u64 n_docs, f64 avgdl-snapshot, f64 k1, f64 b
#   u64 doc-length array (varint per doc)
#   ext_id table: per doc u32 len + utf8
#   u32 n_terms; per term: u32 len + utf8, varint df,
#     then df x (varint doc_id delta, varint tf) with the first delta being
#     the absolute doc_id


def save_index(index: InvertedIndex, path: str | Path) -> None:
    buf = bytearray()
    buf += INDEX_MAGIC
    buf += struct.pack("<I", INDEX_VERSION)
    buf += struct.pack("<Qddd", index.n_docs, index.avgdl, index.params.k1, index.params.b)
    for dl in index.doc_lengths:
        _write_varint(buf, int(dl))
    for ext in index.ext_ids:
        b = ext.encode("utf-8")
        buf += struct.pack("<I", len(b))
        buf += b
    buf += struct.pack("<I", len(index.terms))
    for term, (ids, tfs) in zip(index.terms, index.postings):
        b = term.encode("utf-8")
        buf += struct.pack("<I", len(b))
        buf += b
        _write_varint(buf, len(ids))
        prev = 0
        for doc_id, tf in zip(ids, tfs):
            _write_varint(buf, int(doc_id) - prev)
            _write_varint(buf, int(tf))
            prev = int(doc_id)
    Path(path).write_bytes(bytes(buf))


def load_index(path: str | Path) -> InvertedIndex:
    data = Path(path).read_bytes()
    if data[:8] != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n_docs, _avgdl, k1, b = struct.unpack_from("<Qddd", data, off)
    off += 8 + 24

    lengths = np.zeros(n_docs, dtype=np.int64)
    for i in range(n_docs):
        lengths[i], off = _read_varint(data, off)
    ext_ids = []
    for _ in range(n_docs):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        ext_ids.append(data[off : off + ln].decode("utf-8"))
        off += ln

    (n_terms,) = struct.unpack_from("<I", data, off)
    off += 4
    terms = []
    postings = []
    for _ in range(n_terms):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        terms.append(data[off : off + ln].decode("utf-8"))
        off += ln
        df, off = _read_varint(data, off)
        ids = np.zeros(df, dtype=np.int64)
        tfs = np.zeros(df, dtype=np.int64)
        prev = 0
        for j in range(df):
            delta, off = _read_varint(data, off)
            tf, off = _read_varint(data, off)
            prev += delta
            ids[j] = prev
            tfs[j] = tf
        postings.append((ids, tfs))

    return InvertedIndex(terms, postings, lengths, ext_ids, Bm25Params(k1=k1, b=b))
