"""Word embeddings and TF-IDF-weighted document/query vectors.

A document's dense representation is the sum over its distinct terms of
tf * idf * embedding, with the smoothed, always-positive idf

    idf(t) = ln((N + 1) / (df(t) + 1)) + 1

which stays defined for query-only terms (df = 0). Sums accumulate in
float64 and are stored as float32; cached norms are computed in float64
from the stored float32 values so a round trip is bit-exact.
"""

from __future__ import annotations

import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .textpipe import Corpus, DocRecord, FormatError, Vocabulary

log = logging.getLogger(__name__)

VECTORS_MAGIC = b"HYIRVECS"
VECTORS_VERSION = 1

NEVER_MATCHES = float("-inf")  # cosine result involving a vectorless operand


class EmbeddingParseError(ValueError):
    """Raised for malformed embedding files, with the offending line number."""


class EmbeddingStore:
    """term -> dense float32 vector, all sharing one dimensionality."""

    def __init__(self, dim: int, terms: dict[str, int], matrix: np.ndarray):
        self.dim = dim
        self.terms = terms
        self.matrix = matrix

    def __contains__(self, term: str) -> bool:
        return term in self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def vector(self, term: str) -> np.ndarray:
        return self.matrix[self.terms[term]]


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Parse the standard text format: header 'count dim', then one
    'term v1 ... v_dim' line per term. Duplicate terms keep the first
    occurrence (with a warning); a wrong component count is an error."""
    terms: dict[str, int] = {}
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingParseError(f"{path}: line 1: expected 'count dim' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise EmbeddingParseError(f"{path}: line 1: non-integer header") from exc
        if dim < 1:
            raise EmbeddingParseError(f"{path}: line 1: dim must be positive")

        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if len(parts) != dim + 1:
                raise EmbeddingParseError(
                    f"{path}: line {lineno}: expected {dim} components, got {len(parts) - 1}"
                )
            term = parts[0]
            if term in terms:
                log.warning("%s: line %d: duplicate term %r, keeping first", path, lineno, term)
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError as exc:
                raise EmbeddingParseError(f"{path}: line {lineno}: non-numeric component") from exc
            if not np.all(np.isfinite(vec)):
                raise EmbeddingParseError(f"{path}: line {lineno}: non-finite component")
            terms[term] = len(rows)
            rows.append(vec)

    if not rows:
        raise EmbeddingParseError(f"{path}: no embedding rows")
    if len(rows) != count:
        log.warning("%s: header said %d terms, parsed %d", path, count, len(rows))
    return EmbeddingStore(dim=dim, terms=terms, matrix=np.vstack(rows))


def smoothed_idf(df: int, n_docs: int) -> float:
    return math.log((n_docs + 1.0) / (df + 1.0)) + 1.0


@dataclass
class DocVector:
    doc_id: int
    vec: np.ndarray  # float32, length dim
    norm: float  # float64 Euclidean length of the stored float32 vector

    @property
    def vectorless(self) -> bool:
        return self.norm == 0.0


def _weighted_sum(term_counts: dict[str, int], vocab: Vocabulary,
                  emb: EmbeddingStore) -> np.ndarray:
    acc = np.zeros(emb.dim, dtype=np.float64)
    for term, tf in term_counts.items():
        if term not in emb:
            continue
        idf = smoothed_idf(vocab.document_frequency(term), vocab.n_docs)
        acc += (tf * idf) * emb.vector(term).astype(np.float64)
    return acc


def _finish(doc_id: int, acc: np.ndarray) -> DocVector:
    vec = acc.astype(np.float32)
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    return DocVector(doc_id=doc_id, vec=vec, norm=norm)


def doc_vector(doc: DocRecord, vocab: Vocabulary, emb: EmbeddingStore) -> DocVector:
    return _finish(doc.doc_id, _weighted_sum(Counter(doc.tokens), vocab, emb))


def query_vector(terms: Sequence[str], vocab: Vocabulary, emb: EmbeddingStore) -> DocVector:
    """Same construction as doc_vector over query-term frequencies.
    Terms absent from the corpus vocabulary use df = 0."""
    return _finish(-1, _weighted_sum(Counter(terms), vocab, emb))


def cosine(a: DocVector, b: DocVector) -> float:
    """Cosine similarity; -inf if either operand is vectorless."""
    if a.vectorless or b.vectorless:
        return NEVER_MATCHES
    num = float(np.dot(a.vec.astype(np.float64), b.vec.astype(np.float64)))
    return num / (a.norm * b.norm)


class VectorStore:
    """doc_id-ordered float32 document vectors with cached norms."""

    def __init__(self, matrix: np.ndarray, norms: np.ndarray):
        self.matrix = matrix  # (n_docs, dim) float32
        self.norms = norms  # (n_docs,) float64

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vectorless(self) -> np.ndarray:
        return self.norms == 0.0

    def get(self, doc_id: int) -> DocVector:
        return DocVector(doc_id=doc_id, vec=self.matrix[doc_id], norm=float(self.norms[doc_id]))

    def unit_rows(self, doc_ids: np.ndarray) -> np.ndarray:
        """float64 unit vectors for the given (vectorized) doc_ids."""
        rows = self.matrix[doc_ids].astype(np.float64)
        return rows / self.norms[doc_ids][:, None]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(VECTORS_MAGIC)
            fh.write(struct.pack("<IQI", VECTORS_VERSION, self.n_docs, self.dim))
            fh.write(np.ascontiguousarray(self.matrix, dtype=np.float32).tobytes())
            fh.write(np.ascontiguousarray(self.norms, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        data = Path(path).read_bytes()
        if data[:8] != VECTORS_MAGIC:
            raise FormatError(f"{path}: bad magic")
        version, count, dim = struct.unpack_from("<IQI", data, 8)
        if version != VECTORS_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        off = 8 + 16
        matrix = np.frombuffer(data, dtype=np.float32, count=count * dim, offset=off)
        matrix = matrix.reshape(count, dim).copy()
        off += 4 * count * dim
        norms = np.frombuffer(data, dtype=np.float64, count=count, offset=off).copy()
        return cls(matrix=matrix, norms=norms)


def build_doc_vectors(corpus: Corpus, emb: EmbeddingStore) -> VectorStore:
    matrix = np.zeros((corpus.n_docs, emb.dim), dtype=np.float32)
    norms = np.zeros(corpus.n_docs, dtype=np.float64)
    for doc in corpus.docs:
        dv = doc_vector(doc, corpus.vocab, emb)
        matrix[doc.doc_id] = dv.vec
        norms[doc.doc_id] = dv.norm
    return VectorStore(matrix=matrix, norms=norms)
