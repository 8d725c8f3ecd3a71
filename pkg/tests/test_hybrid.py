import math

import numpy as np
import pytest

from hybridir.embeddings import build_doc_vectors, load_embeddings, query_vector
from hybridir.graph import GraphSearchParams, brute_force_knn
from hybridir.hybrid import (
    NEURAL,
    SYMBOLIC,
    HybridHit,
    ParallelParams,
    SequentialParams,
    expansion_pool,
    lin_comb_rescore,
    lin_comb_score,
    merge_parallel,
    parallel_search,
    read_run_file,
    sequential_search,
    write_run_file,
)
from hybridir.inverted import ScoredDoc, bm25_search, build_inverted_index
from hybridir.textpipe import PipelineConfig, ingest_corpus, process_query

from .conftest import jsonl


def sd(pairs):
    return [ScoredDoc(doc_id=d, score=s) for d, s in pairs]


def test_params_validation():
    with pytest.raises(ValueError):
        ParallelParams(n=5, m=6)
    with pytest.raises(ValueError):
        ParallelParams(n=5, m=0)
    with pytest.raises(ValueError):
        SequentialParams(n=5, s=6)
    with pytest.raises(ValueError):
        SequentialParams(n=5, s=2, expand_proportion=0.0)


def test_merge_example():
    # BM25 {A=0, B=1}, neural [B, C=2, D=3], n=4 -> [A, B, C, D]
    hits = merge_parallel(sd([(0, 3.0), (1, 2.0)]),
                          sd([(1, 0.9), (2, 0.8), (3, 0.7)]), n=4)
    assert [h.doc_id for h in hits] == [0, 1, 2, 3]
    assert [h.origin for h in hits] == [SYMBOLIC, SYMBOLIC, NEURAL, NEURAL]


def test_merge_stops_at_n():
    hits = merge_parallel(sd([(0, 3.0)]), sd([(1, 0.9), (2, 0.8), (3, 0.7)]), n=2)
    assert [h.doc_id for h in hits] == [0, 1]


def test_merge_can_fall_short():
    hits = merge_parallel(sd([(0, 3.0), (1, 2.0)]), sd([(0, 0.9), (1, 0.8)]), n=4)
    assert [h.doc_id for h in hits] == [0, 1]


@pytest.fixture
def tiny_setup(tmp_path):
    """Seed doc matches the query term; X and Y reachable only via the graph.
    cosine(q, X) = 0.9 > cosine(q, Y) = 0.2 by construction."""
    corpus = ingest_corpus(
        jsonl([("seed", "aa"), ("X", "bb"), ("Y", "cc")]),
        PipelineConfig(stopword_list=frozenset()),
    )
    emb_path = tmp_path / "emb.txt"
    ybb = math.sqrt(1 - 0.81)
    ycc = math.sqrt(1 - 0.04)
    emb_path.write_text(
        f"3 2\naa 1 0\nbb 0.9 {ybb:.9f}\ncc 0.2 {ycc:.9f}\n", encoding="utf-8"
    )
    emb = load_embeddings(emb_path)
    index = build_inverted_index(corpus)
    vectors = build_doc_vectors(corpus, emb)
    graph = brute_force_knn(vectors, k=2)
    qterms = process_query("aa", corpus.config)
    qvec = query_vector(qterms, corpus.vocab, emb)
    return corpus, index, vectors, graph, emb, qterms, qvec


def test_seq_one_seed_expansion(tiny_setup):
    corpus, index, vectors, graph, emb, qterms, qvec = tiny_setup
    result = sequential_search(qterms, qvec, index, graph, vectors,
                               SequentialParams(n=2, s=1))
    assert [h.doc_id for h in result.hits] == [0, 1]  # [seed, X]
    assert [h.origin for h in result.hits] == [SYMBOLIC, NEURAL]
    assert result.hits[1].score == pytest.approx(0.9, abs=1e-6)


def test_seq_s_equals_n_returns_seeds_only(tiny_setup):
    corpus, index, vectors, graph, emb, qterms, qvec = tiny_setup
    result = sequential_search(qterms, qvec, index, graph, vectors,
                               SequentialParams(n=1, s=1))
    assert [h.doc_id for h in result.hits] == [0]
    assert result.hits[0].origin == SYMBOLIC


def test_seq_no_seeds_falls_back_to_graph(tiny_setup):
    corpus, index, vectors, graph, emb, _, qvec = tiny_setup
    result = sequential_search(["zzz"], qvec, index, graph, vectors,
                               SequentialParams(n=3, s=1))
    assert result.warnings
    assert all(h.origin == NEURAL for h in result.hits)
    assert result.hits[0].doc_id == 0  # cosine(q, seed vec) = 1 is the best


def test_seq_vectorless_query_returns_seeds(tiny_setup):
    corpus, index, vectors, graph, emb, qterms, _ = tiny_setup
    vless = query_vector(["zzz"], corpus.vocab, emb)
    result = sequential_search(qterms, vless, index, graph, vectors,
                               SequentialParams(n=3, s=1))
    assert [h.doc_id for h in result.hits] == [0]
    assert any("vectorless" in w for w in result.warnings)


def test_seq_no_seeds_and_vectorless_is_empty(tiny_setup):
    corpus, index, vectors, graph, emb, _, _ = tiny_setup
    vless = query_vector(["zzz"], corpus.vocab, emb)
    result = sequential_search(["zzz"], vless, index, graph, vectors,
                               SequentialParams(n=3, s=1))
    assert result.hits == []
    assert len(result.warnings) == 2


def test_par_degenerate_identity(small_synth_context):
    context, queries, qrels, data = small_synth_context
    for qid, text in queries:
        terms, qvec = context.query_inputs(text)
        base = bm25_search(context.index, terms, 50)
        result = parallel_search(terms, qvec, context.index, context.graph,
                                 context.vectors, ParallelParams(n=50, m=50))
        assert [h.doc_id for h in result.hits] == [d.doc_id for d in base]
        assert [h.score for h in result.hits] == [d.score for d in base]
        assert all(h.origin == SYMBOLIC for h in result.hits)


def test_par_inclusion_and_no_duplicates(small_synth_context):
    context, queries, qrels, data = small_synth_context
    for qid, text in queries:
        terms, qvec = context.query_inputs(text)
        base = bm25_search(context.index, terms, 10)
        result = parallel_search(terms, qvec, context.index, context.graph,
                                 context.vectors, ParallelParams(n=40, m=10))
        ids = result.doc_ids
        assert ids[: len(base)] == [d.doc_id for d in base]
        assert all(h.origin == SYMBOLIC for h in result.hits[: len(base)])
        assert all(h.origin == NEURAL for h in result.hits[len(base):])
        assert len(ids) == len(set(ids))
        assert len(ids) <= 40


def test_par_empty_terms_degrades_to_neural(small_synth_context):
    context, queries, qrels, data = small_synth_context
    _, qvec = context.query_inputs(queries[0][1])
    result = parallel_search([], qvec, context.index, context.graph,
                             context.vectors, ParallelParams(n=10, m=5))
    assert result.warnings
    assert all(h.origin == NEURAL for h in result.hits)
    assert len(result.hits) == 10


def test_par_vectorless_degrades_to_symbolic(small_synth_context):
    context, queries, qrels, data = small_synth_context
    terms, _ = context.query_inputs(queries[0][1])
    vless = query_vector(["qqqqq"], context.corpus.vocab, context.embeddings)
    result = parallel_search(terms, vless, context.index, context.graph,
                             context.vectors, ParallelParams(n=10, m=5))
    assert any("vectorless" in w for w in result.warnings)
    assert all(h.origin == SYMBOLIC for h in result.hits)


def test_par_overfetch(small_synth_context):
    context, queries, qrels, data = small_synth_context
    terms, qvec = context.query_inputs(queries[0][1])
    with pytest.raises(ValueError):
        parallel_search(terms, qvec, context.index, context.graph,
                        context.vectors, ParallelParams(n=10, m=5),
                        neural_overfetch=0.5)
    plain = parallel_search(terms, qvec, context.index, context.graph,
                            context.vectors, ParallelParams(n=30, m=10))
    fat = parallel_search(terms, qvec, context.index, context.graph,
                          context.vectors, ParallelParams(n=30, m=10),
                          neural_overfetch=1.5)
    assert len(fat.hits) >= len(plain.hits)


def test_expansion_pool_bound_and_nesting(small_synth_context):
    context, queries, qrels, data = small_synth_context
    k = context.graph.k
    for qid, text in queries:
        terms, _ = context.query_inputs(text)
        seeds = bm25_search(context.index, terms, 8)
        pools = {}
        for p in (0.25, 0.5, 1.0):
            pool = expansion_pool(seeds, context.graph, p)
            assert len(pool) <= math.ceil(p * len(seeds)) * k
            assert not set(pool.tolist()) & {s.doc_id for s in seeds}
            pools[p] = set(pool.tolist())
        assert pools[0.25] <= pools[0.5] <= pools[1.0]


def test_seq_recall_floor(small_synth_context):
    # every seed appears in the output, so recall@n(seq) >= recall@s(bm25)
    from hybridir.evaluation import recall_at_k

    context, queries, qrels, data = small_synth_context
    s, n = 10, 50
    for qid, text in queries:
        terms, qvec = context.query_inputs(text)
        seeds = bm25_search(context.index, terms, s)
        result = sequential_search(terms, qvec, context.index, context.graph,
                                   context.vectors, SequentialParams(n=n, s=s))
        seed_ext = [context.index.ext_ids[d.doc_id] for d in seeds]
        seq_ext = [context.index.ext_ids[d] for d in result.doc_ids]
        assert set(seed_ext) <= set(seq_ext)
        assert recall_at_k(seq_ext, qrels, qid, n) >= recall_at_k(seed_ext, qrels, qid, s)


def test_lin_comb_score():
    assert lin_comb_score(1.0, 2.5, -0.3) == 2.5
    assert lin_comb_score(0.0, 2.5, -0.3) == -0.3
    assert lin_comb_score(0.5, 2.0, 0.4) == pytest.approx(1.2, abs=1e-12)
    assert lin_comb_score(1.0, 2.5, float("-inf")) == 2.5
    with pytest.raises(ValueError):
        lin_comb_score(1.5, 0.0, 0.0)


def test_lin_comb_rescore_boundaries(small_synth_context):
    context, queries, qrels, data = small_synth_context
    terms, qvec = context.query_inputs(queries[0][1])
    base = bm25_search(context.index, terms, 10)
    ids = [d.doc_id for d in base]
    at_one = lin_comb_rescore(terms, qvec, ids, context.index, context.vectors, 1.0)
    assert [d.doc_id for d in at_one] == ids
    for got, want in zip(at_one, base):
        assert got.score == pytest.approx(want.score, abs=1e-9)
    at_zero = lin_comb_rescore(terms, qvec, ids, context.index, context.vectors, 0.0)
    unit = context.vectors.unit_rows(np.asarray(ids))
    sims = unit @ (qvec.vec.astype(np.float64) / qvec.norm)
    order = np.lexsort((ids, -sims))
    assert [d.doc_id for d in at_zero] == [ids[i] for i in order]


def test_run_file_round_trip(tmp_path):
    runs = {
        "q1": [("docA", SYMBOLIC, 3.25), ("docB", NEURAL, 0.91)],
        "q2": [("docC", SYMBOLIC, 1.0)],
    }
    plain = tmp_path / "plain.run"
    trec = tmp_path / "trec.run"
    write_run_file(plain, runs)
    write_run_file(trec, runs, trec=True)
    assert read_run_file(plain) == {"q1": ["docA", "docB"], "q2": ["docC"]}
    assert read_run_file(trec) == {"q1": ["docA", "docB"], "q2": ["docC"]}
    line = plain.read_text().splitlines()[0]
    assert line.split("\t") == ["q1", "docA", "1", "symbolic", "3.250000"]
    line = trec.read_text().splitlines()[0]
    assert line.split() == ["q1", "Q0", "docA", "1", "3.250000", "hybridir"]
