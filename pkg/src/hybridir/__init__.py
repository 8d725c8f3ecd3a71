"""Hybrid symbolic/neural first-stage retrieval.

A BM25 inverted index and a k-NN graph over TF-IDF-weighted embedding
vectors, combined by a parallel (retrieve both, merge) or sequential
(BM25 seeds, graph expansion, cosine fill) search scheme, plus a
recall/latency evaluation harness.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .embeddings import (
    DocVector,
    EmbeddingParseError,
    EmbeddingStore,
    VectorStore,
    build_doc_vectors,
    cosine,
    doc_vector,
    load_embeddings,
    query_vector,
)
from .evaluation import (
    EvalReport,
    SearchContext,
    SweepSpec,
    evaluate_run,
    load_qrels,
    origin_analysis,
    recall_at_k,
    sweep_and_cv,
)
from .graph import (
    GraphBuildError,
    GraphSearchParams,
    KnnGraph,
    NnDescentParams,
    VectorlessQueryError,
    brute_force_knn,
    build_nn_descent,
    estimate_graph_precision,
    graph_search,
)
from .hybrid import (
    HybridHit,
    HybridResult,
    ParallelParams,
    SequentialParams,
    lin_comb_rescore,
    lin_comb_score,
    parallel_search,
    sequential_search,
)
from .inverted import (
    Bm25Params,
    InvertedIndex,
    ScoredDoc,
    bm25_search,
    build_inverted_index,
)
from .synthetic import SyntheticData, generate_mismatch_corpus
from .textpipe import (
    Corpus,
    DocRecord,
    IngestError,
    PipelineConfig,
    Vocabulary,
    ingest_corpus,
    process_query,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
