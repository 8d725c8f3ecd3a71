"""Corpus ingestion and text normalization.

The same pipeline configuration is used at indexing and query time; it is
recorded inside every artifact built from it so query-time processing can
never drift from the index.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .stopwords import DEFAULT_STOPWORDS

CORPUS_MAGIC = b"HYIRCORP"
CORPUS_VERSION = 1


class IngestError(ValueError):
    """Raised for malformed or duplicate input records."""


class FormatError(ValueError):
    """Raised when an on-disk artifact fails its magic/version check."""


@dataclass(frozen=True)
class PipelineConfig:
    lowercase: bool = True
    stemming: str = "off"  # "off" | "light"
    stopword_list: frozenset[str] = field(default_factory=lambda: DEFAULT_STOPWORDS)
    stopwords_on_documents: bool = False
    token_pattern: str = r"[^0-9A-Za-z]+"

    def __post_init__(self):
        if self.stemming not in ("off", "light"):
            raise ValueError(f"unknown stemming mode: {self.stemming!r}")

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stemming": self.stemming,
            "stopword_list": sorted(self.stopword_list),
            "stopwords_on_documents": self.stopwords_on_documents,
            "token_pattern": self.token_pattern,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            lowercase=d["lowercase"],
            stemming=d["stemming"],
            stopword_list=frozenset(d["stopword_list"]),
            stopwords_on_documents=d["stopwords_on_documents"],
            token_pattern=d["token_pattern"],
        )


@dataclass
class DocRecord:
    doc_id: int
    ext_id: str
    tokens: list[str]

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class Vocabulary:
    terms: list[str]  # term_id -> term, in first-occurrence order
    term_ids: dict[str, int]
    df: np.ndarray  # per-term document frequency
    n_docs: int
    total_tokens: int

    @property
    def avgdl(self) -> float:
        return self.total_tokens / self.n_docs if self.n_docs else 0.0

    def document_frequency(self, term: str) -> int:
        tid = self.term_ids.get(term)
        return int(self.df[tid]) if tid is not None else 0


@dataclass
class Corpus:
    docs: list[DocRecord]
    vocab: Vocabulary
    config: PipelineConfig

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    def save(self, path: str | Path) -> None:
        save_corpus(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        return load_corpus(path)


def light_stem(token: str) -> str:
    """Suffix-stripping 'S-stemmer': conflates plural and singular forms."""
    if len(token) > 4 and token.endswith("ies") and token[-4] not in "ae":
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("es") and token[-3] not in "aeo":
        return token[:-1]
    if len(token) > 3 and token.endswith("s") and token[-2] not in "us":
        return token[:-1]
    return token


def tokenize(text: str, config: PipelineConfig) -> list[str]:
    """Split on the configured separator pattern, normalize, stem."""
    if config.lowercase:
        text = text.lower()
    tokens = [t for t in re.split(config.token_pattern, text) if t]
    if config.stemming == "light":
        tokens = [light_stem(t) for t in tokens]
    return tokens


def process_query(
    text: str,
    config: PipelineConfig,
    stopwords: frozenset[str] | None = None,
) -> list[str]:
    """Normalize a query with the corpus pipeline and drop stopwords.

    Duplicate terms are preserved. An all-stopword query returns [].
    """
    if stopwords is None:
        stopwords = config.stopword_list
    return [t for t in tokenize(text, config) if t not in stopwords]


def ingest_corpus(source: Iterable[str] | str | Path, config: PipelineConfig) -> Corpus:
    """Build a Corpus from line-delimited JSON records {"ext_id": ..., "text": ...}.

    doc_ids are dense integers assigned in input order. Raises IngestError on
    a malformed line or duplicate ext_id, naming the offender.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return ingest_corpus(list(fh), config)

    docs: list[DocRecord] = []
    seen_ext: set[str] = set()
    terms: list[str] = []
    term_ids: dict[str, int] = {}
    df_counts: list[int] = []
    total_tokens = 0

    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or "ext_id" not in rec or "text" not in rec:
            raise IngestError(f"line {lineno}: record must have 'ext_id' and 'text' fields")
        ext_id = str(rec["ext_id"])
        if ext_id in seen_ext:
            raise IngestError(f"line {lineno}: duplicate ext_id {ext_id!r}")
        seen_ext.add(ext_id)

        tokens = tokenize(str(rec["text"]), config)
        if config.stopwords_on_documents:
            tokens = [t for t in tokens if t not in config.stopword_list]

        for t in set(tokens):
            tid = term_ids.get(t)
            if tid is None:
                term_ids[t] = len(terms)
                terms.append(t)
                df_counts.append(1)
            else:
                df_counts[tid] += 1
        total_tokens += len(tokens)
        docs.append(DocRecord(doc_id=len(docs), ext_id=ext_id, tokens=tokens))

    vocab = Vocabulary(
        terms=terms,
        term_ids=term_ids,
        df=np.asarray(df_counts, dtype=np.int64),
        n_docs=len(docs),
        total_tokens=total_tokens,
    )
    return Corpus(docs=docs, vocab=vocab, config=config)


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    """Read tab-separated 'query_id<TAB>text' lines."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise IngestError(f"line {lineno}: expected 'query_id<TAB>text'")
        out.append((parts[0].strip(), parts[1]))
    return out


# --- on-disk document store -------------------------------------------------
#
# Directory layout:
#   manifest.json  human-readable config + statistics
#   tokens.bin     magic 'HYIRCORP', u32 version, term dictionary,
#                  then per-document ext_id and term-id token stream


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    manifest = {
        "format": "hybridir-corpus",
        "version": CORPUS_VERSION,
        "config": corpus.config.to_dict(),
        "n_docs": corpus.n_docs,
        "n_terms": len(corpus.vocab.terms),
        "total_tokens": corpus.vocab.total_tokens,
        "avgdl": corpus.vocab.avgdl,
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    with open(path / "tokens.bin", "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<I", CORPUS_VERSION))
        fh.write(struct.pack("<I", len(corpus.vocab.terms)))
        for term in corpus.vocab.terms:
            b = term.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
        fh.write(struct.pack("<Q", corpus.n_docs))
        tid = corpus.vocab.term_ids
        for doc in corpus.docs:
            b = doc.ext_id.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
            fh.write(struct.pack("<I", len(doc.tokens)))
            ids = np.fromiter((tid[t] for t in doc.tokens), dtype=np.uint32, count=len(doc.tokens))
            fh.write(ids.tobytes())


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != "hybridir-corpus":
        raise FormatError(f"{path}: not a corpus store")
    config = PipelineConfig.from_dict(manifest["config"])

    data = (path / "tokens.bin").read_bytes()
    if data[:8] != CORPUS_MAGIC:
        raise FormatError(f"{path}/tokens.bin: bad magic")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != CORPUS_VERSION:
        raise FormatError(f"{path}/tokens.bin: unsupported version {version}")

    (n_terms,) = struct.unpack_from("<I", data, off)
    off += 4
    terms = []
    for _ in range(n_terms):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        terms.append(data[off : off + ln].decode("utf-8"))
        off += ln
    term_ids = {t: i for i, t in enumerate(terms)}

    (n_docs,) = struct.unpack_from("<Q", data, off)
    off += 8
    docs = []
    df = np.zeros(n_terms, dtype=np.int64)
    total_tokens = 0
    for doc_id in range(n_docs):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        ext_id = data[off : off + ln].decode("utf-8")
        off += ln
        (ntok,) = struct.unpack_from("<I", data, off)
        off += 4
        ids = np.frombuffer(data, dtype=np.uint32, count=ntok, offset=off)
        off += 4 * ntok
        tokens = [terms[i] for i in ids]
        np.add.at(df, np.unique(ids), 1)
        total_tokens += ntok
        docs.append(DocRecord(doc_id=doc_id, ext_id=ext_id, tokens=tokens))

    vocab = Vocabulary(terms=terms, term_ids=term_ids, df=df,
                       n_docs=n_docs, total_tokens=total_tokens)
    return Corpus(docs=docs, vocab=vocab, config=config)
