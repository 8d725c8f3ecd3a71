"""Hybrid first-stage retrieval over the inverted index and the k-NN graph.

Two schemes:

* parallel: run BM25 (top-m) and graph cosine search (top-n) independently,
  keep the BM25 block as the base and append unseen neural results until n
  candidates are collected. No cross-space scoring or re-ranking happens;
  the two score spaces are kept for diagnostics only.

* sequential: take the top-s BM25 documents as seeds, expand a proportion
  of the best seeds through their k-NN lists (constant-time lookups), then
  fill the remaining slots with the expanded documents ranked by cosine
  similarity to the query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .embeddings import DocVector, VectorStore
from .graph import GraphSearchParams, KnnGraph, graph_search
from .inverted import Bm25Params, InvertedIndex, ScoredDoc, bm25_search

SYMBOLIC = "symbolic"
NEURAL = "neural"


@dataclass(frozen=True)
class ParallelParams:
    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ValueError("require 1 <= m <= n")


@dataclass(frozen=True)
class SequentialParams:
    n: int
    s: int
    expand_proportion: float = 1.0

    def __post_init__(self):
        if not 1 <= self.s <= self.n:
            raise ValueError("require 1 <= s <= n")
        if not 0.0 < self.expand_proportion <= 1.0:
            raise ValueError("expand_proportion must be in (0, 1]")


@dataclass(frozen=True)
class HybridHit:
    doc_id: int
    origin: str  # SYMBOLIC or NEURAL
    score: float  # in the origin's own score space; diagnostic only


@dataclass
class HybridResult:
    hits: list[HybridHit]
    warnings: list[str] = field(default_factory=list)

    @property
    def doc_ids(self) -> list[int]:
        return [h.doc_id for h in self.hits]

    def count(self, origin: str) -> int:
        return sum(1 for h in self.hits if h.origin == origin)


def parallel_search(
    query_terms: Sequence[str],
    query_vec: DocVector,
    index: InvertedIndex,
    graph: KnnGraph,
    vectors: VectorStore,
    params: ParallelParams,
    bm25_params: Bm25Params | None = None,
    search_params: GraphSearchParams = GraphSearchParams(),
    neural_overfetch: float = 1.0,
) -> HybridResult:
    """Parallel scheme. Degrades to a single-leg result (with a warning)
    when the query is all-stopword (no symbolic leg) or has no embedded
    terms (no neural leg).

    The neural leg may retrieve ceil(neural_overfetch * n) candidates; the
    default 1.0 matches the base scheme and can leave the output short of n
    when the legs overlap heavily.
    """
    if neural_overfetch < 1.0:
        raise ValueError("neural_overfetch must be >= 1.0")
    warnings = []
    symbolic = []
    if query_terms:
        symbolic = bm25_search(index, query_terms, params.m, bm25_params)
        if params.m == params.n:
            # degenerate scheme: the symbolic leg alone defines the output,
            # even when fewer than n documents match any query term
            return HybridResult(hits=merge_parallel(symbolic, [], params.n),
                                warnings=warnings)
    else:
        warnings.append("empty query term list; neural-only result")

    neural = []
    if query_vec.vectorless:
        warnings.append("vectorless query; symbolic-only result")
    else:
        n_neural = math.ceil(neural_overfetch * params.n)
        sp = replace(search_params, pool_size=max(search_params.pool_size, n_neural))
        neural = graph_search(graph, vectors, query_vec, n_neural, sp)

    return HybridResult(hits=merge_parallel(symbolic, neural, params.n), warnings=warnings)


def merge_parallel(
    symbolic: list[ScoredDoc], neural: list[ScoredDoc], n: int
) -> list[HybridHit]:
    """The parallel scheme's aggregation: BM25 results form the base, then
    neural results are scanned top to end and appended if unseen, stopping
    at n candidates. No cross-space scores are computed."""
    hits = [HybridHit(d.doc_id, SYMBOLIC, d.score) for d in symbolic]
    seen = {h.doc_id for h in hits}
    for d in neural:
        if len(hits) >= n:
            break
        if d.doc_id in seen:
            continue
        seen.add(d.doc_id)
        hits.append(HybridHit(d.doc_id, NEURAL, d.score))
    return hits


def expansion_pool(
    seeds: list[ScoredDoc],
    graph: KnnGraph,
    expand_proportion: float,
) -> np.ndarray:
    """Doc ids associated by expanding the top proportion of seeds through
    their forward k-NN lists, minus the seeds themselves. Bounded by
    ceil(p * |seeds|) * k."""
    n_expand = math.ceil(expand_proportion * len(seeds))
    seed_set = {d.doc_id for d in seeds}
    pool: set[int] = set()
    for seed in seeds[:n_expand]:
        pool.update(graph.neighbors(seed.doc_id))
    pool -= seed_set
    return np.array(sorted(pool), dtype=np.int64)


def sequential_search(
    query_terms: Sequence[str],
    query_vec: DocVector,
    index: InvertedIndex,
    graph: KnnGraph,
    vectors: VectorStore,
    params: SequentialParams,
    bm25_params: Bm25Params | None = None,
    search_params: GraphSearchParams = GraphSearchParams(),
) -> HybridResult:
    """Sequential scheme. With no BM25 seeds the query falls back to pure
    graph search (flagged); a vectorless query returns seeds only (flagged)."""
    warnings = []
    seeds = bm25_search(index, query_terms, params.s, bm25_params) if query_terms else []

    if not seeds:
        warnings.append("no BM25 seeds; falling back to pure graph search")
        if query_vec.vectorless:
            warnings.append("vectorless query; empty result")
            return HybridResult(hits=[], warnings=warnings)
        sp = replace(search_params, pool_size=max(search_params.pool_size, params.n))
        neural = graph_search(graph, vectors, query_vec, params.n, sp)
        return HybridResult(
            hits=[HybridHit(d.doc_id, NEURAL, d.score) for d in neural],
            warnings=warnings,
        )

    hits = [HybridHit(d.doc_id, SYMBOLIC, d.score) for d in seeds]
    if query_vec.vectorless:
        warnings.append("vectorless query; seeds only")
        return HybridResult(hits=hits, warnings=warnings)

    budget = params.n - len(seeds)
    if budget > 0:
        pool = expansion_pool(seeds, graph, params.expand_proportion)
        if len(pool):
            rows = vectors.matrix[pool].astype(np.float64)
            sims = rows @ (query_vec.vec.astype(np.float64) / query_vec.norm)
            sims /= vectors.norms[pool]
            order = np.lexsort((pool, -sims))[:budget]
            for idx in order:
                hits.append(HybridHit(int(pool[idx]), NEURAL, float(sims[idx])))
    return HybridResult(hits=hits, warnings=warnings)


def lin_comb_score(lam: float, bm25_score: float, cosine_score: float) -> float:
    """lam * BM25 + (1 - lam) * cosine. At the boundaries the other space's
    score is ignored entirely (so a -inf never-matches cosine cannot poison
    a lam=1 score)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must be in [0, 1]")
    if lam == 1.0:
        return bm25_score
    if lam == 0.0:
        return cosine_score
    return lam * bm25_score + (1.0 - lam) * cosine_score


def lin_comb_rescore(
    query_terms: Sequence[str],
    query_vec: DocVector,
    doc_ids: Sequence[int],
    index: InvertedIndex,
    vectors: VectorStore,
    lam: float,
    bm25_params: Bm25Params | None = None,
) -> list[ScoredDoc]:
    """Brute-force rescoring of a candidate set by the linear combination of
    BM25 score and cosine similarity, sorted (score desc, doc_id asc)."""
    params = bm25_params or index.params
    k1, b = params.k1, params.b
    avgdl = index.avgdl
    q_unit = None
    if not query_vec.vectorless:
        q_unit = query_vec.vec.astype(np.float64) / query_vec.norm

    out = []
    for doc_id in doc_ids:
        bm25 = 0.0
        for term in query_terms:
            tf = index.term_frequency(term, doc_id)
            if tf == 0:
                continue
            dl = float(index.doc_lengths[doc_id])
            bm25 += index.idf(term) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
        if q_unit is None or vectors.norms[doc_id] == 0.0:
            cos = float("-inf")
        else:
            cos = float(vectors.matrix[doc_id].astype(np.float64) @ q_unit)
            cos /= float(vectors.norms[doc_id])
        out.append(ScoredDoc(doc_id=int(doc_id), score=lin_comb_score(lam, bm25, cos)))
    out.sort(key=lambda d: (-d.score, d.doc_id))
    return out


def write_run_file(
    path,
    runs: dict[str, list[tuple[str, str, float]]],
    trec: bool = False,
    tag: str = "hybridir",
) -> None:
    """Write per-query ranked results.

    Default format: 'query_id<TAB>doc_ext_id<TAB>rank<TAB>origin<TAB>score'.
    With trec=True, the strict 6-column TREC run format is emitted instead:
    'query_id Q0 doc_ext_id rank score tag'.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for qid, rows in runs.items():
            for rank, (ext_id, origin, score) in enumerate(rows, start=1):
                if trec:
                    fh.write(f"{qid} Q0 {ext_id} {rank} {score:.6f} {tag}\n")
                else:
                    fh.write(f"{qid}\t{ext_id}\t{rank}\t{origin}\t{score:.6f}\n")


def read_run_file(path) -> dict[str, list[str]]:
    """Read either run format back to qid -> ranked ext_id list."""
    runs: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) == 6:  # TREC format
                qid, _, ext_id = parts[0], parts[1], parts[2]
            else:
                qid, ext_id = parts[0], parts[1]
            runs.setdefault(qid, []).append(ext_id)
    return runs
