"""Recall@K and latency evaluation, origin analysis, and cross-validated
parameter sweeps.

Latency protocol: queries run sequentially on one thread; each query is
timed over at least three repetitions and the median is reported. The
parallel scheme's time is reported as max(symbolic leg, neural leg) plus
the merge, computed from separately measured legs so numbers are
reproducible rather than racing actual threads.
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .embeddings import EmbeddingStore, VectorStore, query_vector
from .graph import GraphSearchParams, KnnGraph, graph_search
from .hybrid import (
    HybridResult,
    ParallelParams,
    SequentialParams,
    merge_parallel,
    parallel_search,
    sequential_search,
)
from .inverted import Bm25Params, InvertedIndex, bm25_search
from .textpipe import Corpus, process_query

log = logging.getLogger(__name__)

METHODS = ("bm25", "cosine", "par", "seq")


class NoJudgmentsError(ValueError):
    """Raised when recall is requested for a query with no relevant docs."""


def load_qrels(path: str | Path) -> dict[str, dict[str, int]]:
    """Whitespace-separated 'query_id 0 doc_ext_id grade' judgments."""
    qrels: dict[str, dict[str, int]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: line {lineno}: expected 4 whitespace-separated fields")
        qid, _, ext_id, grade = parts
        qrels.setdefault(qid, {})[ext_id] = int(grade)
    return qrels


def relevant_set(qrels: dict[str, dict[str, int]], query_id: str) -> set[str]:
    return {d for d, g in qrels.get(query_id, {}).items() if g > 0}


def recall_at_k(
    retrieved_ext_ids: list[str],
    qrels: dict[str, dict[str, int]],
    query_id: str,
    k: int,
) -> float:
    """|top-k retrieved  intersect  relevant| / |relevant|."""
    relevant = relevant_set(qrels, query_id)
    if not relevant:
        raise NoJudgmentsError(f"query {query_id} has no relevant documents")
    return len(set(retrieved_ext_ids[:k]) & relevant) / len(relevant)


@dataclass
class SearchContext:
    """The built artifacts one evaluation runs against."""

    corpus: Corpus
    index: InvertedIndex
    vectors: VectorStore
    graph: KnnGraph
    embeddings: EmbeddingStore

    def query_inputs(self, text: str):
        terms = process_query(text, self.corpus.config)
        qvec = query_vector(terms, self.corpus.vocab, self.embeddings)
        return terms, qvec


def search_once(
    context: SearchContext,
    method: str,
    terms: list[str],
    qvec,
    n: int,
    params: dict,
) -> HybridResult:
    """Run one query with one method; params carries the method's knobs
    (k1, b, m, s, p, ef, n_starts, seed)."""
    bm25_params = Bm25Params(
        k1=params.get("k1", context.index.params.k1),
        b=params.get("b", context.index.params.b),
    )
    gsp = GraphSearchParams(
        pool_size=params.get("ef", max(100, n)),
        n_starts=params.get("n_starts", 10),
        rng_seed=params.get("seed", 0),
    )
    if method == "bm25":
        docs = bm25_search(context.index, terms, n, bm25_params) if terms else []
        return HybridResult(hits=merge_parallel(docs, [], n))
    if method == "cosine":
        if qvec.vectorless:
            return HybridResult(hits=[], warnings=["vectorless query"])
        gsp = replace(gsp, pool_size=max(gsp.pool_size, n))
        docs = graph_search(context.graph, context.vectors, qvec, n, gsp)
        return HybridResult(hits=merge_parallel([], docs, n))
    if method == "par":
        pp = ParallelParams(n=n, m=params.get("m", n))
        return parallel_search(
            terms, qvec, context.index, context.graph, context.vectors,
            pp, bm25_params, gsp,
        )
    if method == "seq":
        sp = SequentialParams(
            n=n, s=params.get("s", max(1, n // 2)),
            expand_proportion=params.get("p", 1.0),
        )
        return sequential_search(
            terms, qvec, context.index, context.graph, context.vectors,
            sp, bm25_params, gsp,
        )
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _median_time(fn, reps: int) -> tuple[object, float]:
    """Run fn reps times; return (last result, median seconds)."""
    times = []
    result = None
    for _ in range(max(3, reps)):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, statistics.median(times)


@dataclass
class EvalReport:
    method: str
    k: int
    per_query_recall: dict[str, float]
    per_query_ms: dict[str, float]
    skipped_queries: list[str] = field(default_factory=list)

    @property
    def mean_recall(self) -> float:
        vals = list(self.per_query_recall.values())
        return sum(vals) / len(vals) if vals else 0.0

    @property
    def mean_recall_pct(self) -> float:
        return 100.0 * self.mean_recall

    @property
    def mean_ms(self) -> float:
        vals = list(self.per_query_ms.values())
        return sum(vals) / len(vals) if vals else 0.0


def evaluate_run(
    context: SearchContext,
    method: str,
    queries: list[tuple[str, str]],
    qrels: dict[str, dict[str, int]],
    k: int,
    params: dict | None = None,
    measure_time: bool = True,
    timing_reps: int = 3,
) -> EvalReport:
    """Per-query and mean recall@k plus per-query latency for one method.

    Queries without relevant documents are excluded from the means and
    reported in skipped_queries. Timing excludes query processing and
    vector construction; for the parallel scheme it is
    max(symbolic leg, neural leg) + merge.
    """
    params = dict(params or {})
    n = params.get("n", k)
    recalls: dict[str, float] = {}
    times: dict[str, float] = {}
    skipped: list[str] = []

    for qid, text in queries:
        if not relevant_set(qrels, qid):
            skipped.append(qid)
            continue
        terms, qvec = context.query_inputs(text)

        if not measure_time:
            result = search_once(context, method, terms, qvec, n, params)
        elif method == "par":
            result, seconds = _timed_parallel(context, terms, qvec, n, params, timing_reps)
            times[qid] = 1000.0 * seconds
        else:
            result, seconds = _median_time(
                lambda: search_once(context, method, terms, qvec, n, params), timing_reps
            )
            times[qid] = 1000.0 * seconds

        ext_ids = [context.index.ext_ids[d] for d in result.doc_ids]
        recalls[qid] = recall_at_k(ext_ids, qrels, qid, k)

    return EvalReport(method=method, k=k, per_query_recall=recalls,
                      per_query_ms=times, skipped_queries=skipped)


def _timed_parallel(context, terms, qvec, n, params, reps):
    """Parallel-scheme timing model: max of the two legs plus the merge."""
    m = params.get("m", n)
    bm25_params = Bm25Params(
        k1=params.get("k1", context.index.params.k1),
        b=params.get("b", context.index.params.b),
    )
    gsp = GraphSearchParams(
        pool_size=max(params.get("ef", max(100, n)), n),
        n_starts=params.get("n_starts", 10),
        rng_seed=params.get("seed", 0),
    )

    symbolic, t_sym = _median_time(
        lambda: bm25_search(context.index, terms, m, bm25_params) if terms else [], reps
    )
    if (terms and m == n) or qvec.vectorless:
        # m == n degenerates to the symbolic leg alone, as in parallel_search
        neural, t_neu = [], 0.0
    else:
        neural, t_neu = _median_time(
            lambda: graph_search(context.graph, context.vectors, qvec, n, gsp), reps
        )
    hits, t_merge = _median_time(lambda: merge_parallel(symbolic, neural, n), reps)
    return HybridResult(hits=hits), max(t_sym, t_neu) + t_merge


def origin_analysis(
    bm25_run: dict[str, list[str]],
    cosine_run: dict[str, list[str]],
    qrels: dict[str, dict[str, int]],
    k: int,
) -> dict[str, tuple[int, int, int]]:
    """Per-query counts of relevant documents found by both methods, only by
    the symbolic run, and only by the neural run (within each run's top-k)."""
    out: dict[str, tuple[int, int, int]] = {}
    for qid in sorted(set(bm25_run) & set(cosine_run)):
        relevant = relevant_set(qrels, qid)
        if not relevant:
            continue
        sym = set(bm25_run[qid][:k]) & relevant
        neu = set(cosine_run[qid][:k]) & relevant
        out[qid] = (len(sym & neu), len(sym - neu), len(neu - sym))
    return out


def mean_origin_counts(per_query: dict[str, tuple[int, int, int]]) -> tuple[float, float, float]:
    if not per_query:
        return (0.0, 0.0, 0.0)
    n = len(per_query)
    return tuple(sum(c[i] for c in per_query.values()) / n for i in range(3))  # type: ignore


@dataclass(frozen=True)
class SweepSpec:
    method: str
    grid: tuple[dict, ...]
    folds: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValueError("grid must be non-empty")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass
class CvReport:
    method: str
    k: int
    fold_best_params: list[dict]
    fold_test_recall: list[float]
    folds: list[list[str]]  # query ids per fold

    @property
    def mean_test_recall(self) -> float:
        return sum(self.fold_test_recall) / len(self.fold_test_recall)


def assign_folds(qids: list[str], folds: int, rng_seed: int) -> list[list[str]]:
    """Random partition of the query set into near-equal folds."""
    import numpy as np

    order = list(np.random.default_rng(rng_seed).permutation(len(qids)))
    shuffled = [qids[i] for i in order]
    return [shuffled[f::folds] for f in range(folds)]


def sweep_and_cv(
    spec: SweepSpec,
    context: SearchContext,
    queries: list[tuple[str, str]],
    qrels: dict[str, dict[str, int]],
    k: int,
) -> CvReport:
    """For each fold, pick the grid point with the best mean recall@k on the
    other folds and evaluate it on the held-out fold. Grid points that fail
    (e.g. s > n) are skipped with a warning."""
    judged = [(qid, text) for qid, text in queries if relevant_set(qrels, qid)]
    if len(judged) < spec.folds:
        raise ValueError(f"need at least {spec.folds} judged queries, have {len(judged)}")
    folds = assign_folds([qid for qid, _ in judged], spec.folds, spec.rng_seed)

    # recall of every (grid point, query), computed once
    point_recall: list[dict[str, float] | None] = []
    for point in spec.grid:
        try:
            report = evaluate_run(
                context, spec.method, judged, qrels, k, dict(point), measure_time=False
            )
            point_recall.append(report.per_query_recall)
        except (ValueError, KeyError) as exc:
            log.warning("skipping grid point %s: %s", point, exc)
            point_recall.append(None)
    if all(r is None for r in point_recall):
        raise ValueError("every grid point failed")

    best_params: list[dict] = []
    test_recalls: list[float] = []
    for f, fold in enumerate(folds):
        train = [qid for g, qs in enumerate(folds) if g != f for qid in qs]
        best_idx, best_mean = None, -1.0
        for idx, recs in enumerate(point_recall):
            if recs is None:
                continue
            mean = sum(recs[qid] for qid in train) / len(train)
            if mean > best_mean:
                best_idx, best_mean = idx, mean
        assert best_idx is not None
        best_params.append(dict(spec.grid[best_idx]))
        recs = point_recall[best_idx]
        test_recalls.append(sum(recs[qid] for qid in fold) / len(fold))

    return CvReport(method=spec.method, k=k, fold_best_params=best_params,
                    fold_test_recall=test_recalls, folds=folds)
