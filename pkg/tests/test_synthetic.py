import json

import pytest

from hybridir.evaluation import evaluate_run
from hybridir.synthetic import expected_bm25_recall, generate_mismatch_corpus


def test_same_seed_is_byte_identical():
    a = generate_mismatch_corpus(seed=3, n_docs=400, n_queries=5, dim=8)
    b = generate_mismatch_corpus(seed=3, n_docs=400, n_queries=5, dim=8)
    assert a.corpus_jsonl == b.corpus_jsonl
    assert a.queries == b.queries
    assert a.qrels == b.qrels
    assert a.embeddings_text == b.embeddings_text


def test_different_seeds_differ():
    a = generate_mismatch_corpus(seed=1, n_docs=400, n_queries=5, dim=8)
    b = generate_mismatch_corpus(seed=2, n_docs=400, n_queries=5, dim=8)
    assert a.corpus_jsonl != b.corpus_jsonl


def test_term_occurrence_contract():
    data = generate_mismatch_corpus(seed=0, n_docs=400, n_queries=5, dim=8)
    docs = {r["ext_id"]: set(r["text"].split())
            for r in map(json.loads, data.corpus_jsonl)}
    for qid, text in data.queries:
        qterms = set(text.split())
        for ext_id, grade in data.qrels[qid].items():
            assert grade > 0
            marker = ext_id[len(qid)]  # relevant ids are <qid>e<j> or <qid>s<j>
            if marker == "e":
                # exact doc: shares at least one term with its query
                assert docs[ext_id] & qterms
            else:
                assert marker == "s"
                # synonym-only doc: zero term overlap with its query
                assert not (docs[ext_id] & qterms)
        # the query's primary terms never occur outside its exact docs
        for ext_id, tokens in docs.items():
            if tokens & qterms:
                assert ext_id.startswith(qid + "e")


def test_exact_match_recall_oracle():
    data = generate_mismatch_corpus(seed=0, n_docs=400, n_queries=5, dim=8)
    assert expected_bm25_recall(data) == pytest.approx(0.70, abs=1e-12)
    assert all(v == 14 / 20 for v in data.exact_match_recall.values())


def test_write_layout(tmp_path):
    data = generate_mismatch_corpus(seed=0, n_docs=400, n_queries=5, dim=8)
    data.write(tmp_path)
    for name in ("docs.jsonl", "queries.tsv", "qrels.txt", "embeddings.txt"):
        assert (tmp_path / name).exists()
    header = (tmp_path / "embeddings.txt").read_text().splitlines()[0]
    count, dim = map(int, header.split())
    assert dim == 8


def test_bm25_recall_equals_oracle_end_to_end(small_synth_context):
    context, queries, qrels, data = small_synth_context
    report = evaluate_run(context, "bm25", queries, qrels, k=100, measure_time=False)
    assert report.mean_recall == pytest.approx(expected_bm25_recall(data), abs=1e-12)


def test_hybrids_recover_synonym_docs(small_synth_context):
    context, queries, qrels, data = small_synth_context
    bm25 = evaluate_run(context, "bm25", queries, qrels, k=100, measure_time=False)
    par = evaluate_run(context, "par", queries, qrels, k=100,
                       params={"m": 50}, measure_time=False)
    seq = evaluate_run(context, "seq", queries, qrels, k=100,
                       params={"s": 50, "p": 0.5}, measure_time=False)
    assert par.mean_recall >= bm25.mean_recall + 0.05
    assert seq.mean_recall >= bm25.mean_recall + 0.05
