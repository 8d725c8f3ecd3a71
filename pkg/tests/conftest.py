import json

import numpy as np
import pytest

from hybridir import PipelineConfig, ingest_corpus
from hybridir.embeddings import VectorStore


def jsonl(pairs):
    """(ext_id, text) pairs -> ingestion-ready lines."""
    return [json.dumps({"ext_id": e, "text": t}) for e, t in pairs]


def store_from(rows) -> VectorStore:
    """VectorStore from a raw matrix, norms computed the way builds do:
    float64 norms of the stored float32 rows."""
    mat = np.asarray(rows, dtype=np.float32)
    norms = np.linalg.norm(mat.astype(np.float64), axis=1)
    return VectorStore(matrix=mat, norms=norms)


def gaussian_store(n: int, dim: int, seed: int) -> VectorStore:
    rng = np.random.default_rng(seed)
    return store_from(rng.standard_normal((n, dim)))


def random_corpus(rng: np.random.Generator, max_docs=200, max_vocab=50):
    """Random small corpus over a bounded vocabulary, empty docs allowed."""
    n_docs = int(rng.integers(1, max_docs + 1))
    vocab = [f"t{i}" for i in range(int(rng.integers(2, max_vocab + 1)))]
    pairs = []
    for d in range(n_docs):
        length = int(rng.integers(0, 30))
        words = [vocab[i] for i in rng.integers(0, len(vocab), size=length)]
        pairs.append((f"d{d}", " ".join(words)))
    config = PipelineConfig(stopword_list=frozenset())
    return ingest_corpus(jsonl(pairs), config), vocab


@pytest.fixture
def three_doc_corpus():
    pairs = [("d1", "cat sat"), ("d2", "dog sat"), ("d3", "cat cat dog")]
    return ingest_corpus(jsonl(pairs), PipelineConfig())


@pytest.fixture(scope="session")
def small_synth_files(tmp_path_factory):
    """A small mismatch corpus written to disk, shared across tests."""
    from hybridir.synthetic import generate_mismatch_corpus

    data = generate_mismatch_corpus(seed=0, n_docs=600, n_queries=10, dim=16)
    outdir = tmp_path_factory.mktemp("synth_small")
    data.write(outdir)
    return outdir, data


@pytest.fixture(scope="session")
def small_synth_context(small_synth_files):
    """Fully built SearchContext over the small mismatch corpus."""
    from hybridir import PipelineConfig, ingest_corpus
    from hybridir.embeddings import build_doc_vectors, load_embeddings
    from hybridir.evaluation import SearchContext, load_qrels
    from hybridir.graph import NnDescentParams, build_nn_descent
    from hybridir.inverted import build_inverted_index
    from hybridir.textpipe import read_queries

    outdir, data = small_synth_files
    corpus = ingest_corpus(outdir / "docs.jsonl", PipelineConfig())
    index = build_inverted_index(corpus)
    emb = load_embeddings(outdir / "embeddings.txt")
    vectors = build_doc_vectors(corpus, emb)
    graph = build_nn_descent(vectors, NnDescentParams(k=20, rng_seed=0))
    context = SearchContext(corpus=corpus, index=index, vectors=vectors,
                            graph=graph, embeddings=emb)
    queries = read_queries(outdir / "queries.tsv")
    qrels = load_qrels(outdir / "qrels.txt")
    return context, queries, qrels, data
