"""Command-line interface.

Every option can also come from a JSON config file passed as
`hybridir --config settings.json <command> ...`; explicit flags override
file values, which override built-in defaults. Config keys match the long
flag names with dashes replaced by underscores.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click

from . import _kernels
from .embeddings import VectorStore, build_doc_vectors, load_embeddings
from .evaluation import (
    SearchContext,
    SweepSpec,
    load_qrels,
    recall_at_k,
    sweep_and_cv,
)
from .graph import KnnGraph, NnDescentParams, build_nn_descent
from .hybrid import read_run_file, write_run_file
from .inverted import Bm25Params, InvertedIndex, build_inverted_index
from .synthetic import generate_mismatch_corpus
from .textpipe import Corpus, PipelineConfig, ingest_corpus, read_queries
from .stopwords import DEFAULT_STOPWORDS, load_stopword_file
from .evaluation import search_once, NoJudgmentsError


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with default values for any option.")
@click.pass_context
def main(ctx, config_path):
    """Hybrid symbolic/neural first-stage retrieval."""
    ctx.ensure_object(dict)
    if config_path:
        ctx.obj.update(json.loads(Path(config_path).read_text(encoding="utf-8")))


def _opt(ctx, name, flag_value, default):
    """Flags override the config file, which overrides the default."""
    if flag_value is not None:
        return flag_value
    return ctx.obj.get(name, default) if ctx.obj else default


@main.command("build-corpus")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--lowercase/--no-lowercase", default=None)
@click.option("--stemming", type=click.Choice(["off", "light"]), default=None)
@click.option("--stopword-file", type=click.Path(exists=True), default=None)
@click.option("--stopwords-on-docs", is_flag=True, default=False,
              help="Also remove stopwords from documents (default: queries only).")
@click.pass_context
def build_corpus(ctx, input_path, out, lowercase, stemming, stopword_file, stopwords_on_docs):
    """Ingest line-delimited JSON documents into a corpus store."""
    stopword_file = _opt(ctx, "stopword_file", stopword_file, None)
    stopwords = load_stopword_file(stopword_file) if stopword_file else DEFAULT_STOPWORDS
    config = PipelineConfig(
        lowercase=_opt(ctx, "lowercase", lowercase, True),
        stemming=_opt(ctx, "stemming", stemming, "off"),
        stopword_list=stopwords,
        stopwords_on_documents=stopwords_on_docs or bool(ctx.obj.get("stopwords_on_docs", False)),
    )
    corpus = ingest_corpus(input_path, config)
    corpus.save(out)
    click.echo(f"corpus: {corpus.n_docs} docs, {len(corpus.vocab.terms)} terms, "
               f"avgdl {corpus.vocab.avgdl:.2f} -> {out}")


@main.command("build-inverted")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.pass_context
def build_inverted(ctx, corpus_path, out, k1, b):
    """Build the BM25 inverted index from a corpus store."""
    corpus = Corpus.load(corpus_path)
    params = Bm25Params(k1=_opt(ctx, "k1", k1, 1.2), b=_opt(ctx, "b", b, 0.75))
    index = build_inverted_index(corpus, params)
    index.save(out)
    click.echo(f"inverted index: {len(index.terms)} terms over {index.n_docs} docs -> {out}")


@main.command("build-vectors")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def build_vectors(corpus_path, emb_path, out):
    """Build TF-IDF-weighted document vectors."""
    corpus = Corpus.load(corpus_path)
    emb = load_embeddings(emb_path)
    vectors = build_doc_vectors(corpus, emb)
    vectors.save(out)
    n_vless = int(vectors.vectorless.sum())
    click.echo(f"vectors: {vectors.n_docs} docs, dim {vectors.dim}, "
               f"{n_vless} vectorless -> {out}")


@main.command("build-graph")
@click.option("--vectors", "vec_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--k", type=int, default=None)
@click.option("--rho", type=float, default=None, help="NN-Descent sample rate.")
@click.option("--delta", type=float, default=None, help="Termination threshold.")
@click.option("--max-iters", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.pass_context
def build_graph(ctx, vec_path, out, k, rho, delta, max_iters, seed, threads):
    """Build the k-NN graph neural index with NN-Descent."""
    vectors = VectorStore.load(vec_path)
    params = NnDescentParams(
        k=_opt(ctx, "k", k, 20),
        sample_rate=_opt(ctx, "rho", rho, 0.5),
        termination_threshold=_opt(ctx, "delta", delta, 0.001),
        max_iters=_opt(ctx, "max_iters", max_iters, 30),
        rng_seed=_opt(ctx, "seed", seed, 0),
    )
    t0 = time.perf_counter()
    graph = build_nn_descent(vectors, params, threads=_opt(ctx, "threads", threads, 1))
    dt = time.perf_counter() - t0
    graph.save(out)
    click.echo(f"graph: {graph.n_nodes} nodes, degree {graph.degree}, "
               f"built in {dt:.1f}s ({_kernels.BACKEND} kernels) -> {out}")


def _load_context(corpus_path, index_path, vec_path, graph_path, emb_path) -> SearchContext:
    return SearchContext(
        corpus=Corpus.load(corpus_path),
        index=InvertedIndex.load(index_path),
        vectors=VectorStore.load(vec_path),
        graph=KnnGraph.load(graph_path),
        embeddings=load_embeddings(emb_path),
    )


@main.command("search")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--vectors", "vec_path", required=True, type=click.Path(exists=True))
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["bm25", "cosine", "par", "seq"]), required=True)
@click.option("--n", type=int, default=None, help="Candidates to retrieve (default 1000).")
@click.option("--m", type=int, default=None, help="Symbolic candidates (par).")
@click.option("--s", type=int, default=None, help="Seed count (seq).")
@click.option("--p", type=float, default=None, help="Seed expansion proportion (seq).")
@click.option("--ef", type=int, default=None, help="Graph-search pool size.")
@click.option("--n-starts", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--trec", is_flag=True, default=False, help="Emit strict 6-column TREC format.")
@click.pass_context
def search(ctx, corpus_path, index_path, vec_path, graph_path, emb_path, queries_path,
           method, n, m, s, p, ef, n_starts, seed, k1, b, out, trec):
    """Run retrieval for a query file and write a run file."""
    context = _load_context(corpus_path, index_path, vec_path, graph_path, emb_path)
    n = _opt(ctx, "n", n, 1000)
    params = {"n": n}
    for key, val in (("m", m), ("s", s), ("p", p), ("ef", ef),
                     ("n_starts", n_starts), ("seed", seed), ("k1", k1), ("b", b)):
        val = _opt(ctx, key, val, None)
        if val is not None:
            params[key] = val

    runs = {}
    for qid, text in read_queries(queries_path):
        terms, qvec = context.query_inputs(text)
        result = search_once(context, method, terms, qvec, n, params)
        for warning in result.warnings:
            click.echo(f"warning: query {qid}: {warning}", err=True)
        runs[qid] = [
            (context.index.ext_ids[h.doc_id], h.origin, h.score) for h in result.hits
        ]
    write_run_file(out, runs, trec=trec)
    click.echo(f"{method}: {len(runs)} queries -> {out}")


@main.command("eval")
@click.option("--run", "run_path", required=True, type=click.Path(exists=True))
@click.option("--qrels", "qrels_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also export per-query recalls as CSV.")
@click.option("--per-query", "jsonl_path", type=click.Path(), default=None,
              help="Also export per-query records as JSON lines.")
@click.pass_context
def eval_cmd(ctx, run_path, qrels_path, k, csv_path, jsonl_path):
    """Score a run file against qrels with recall@K."""
    k = _opt(ctx, "k", k, 1000)
    qrels = load_qrels(qrels_path)
    runs = read_run_file(run_path)

    recalls = {}
    skipped = []
    for qid, ext_ids in runs.items():
        try:
            recalls[qid] = recall_at_k(ext_ids, qrels, qid, k)
        except NoJudgmentsError:
            skipped.append(qid)

    mean = 100.0 * sum(recalls.values()) / len(recalls) if recalls else 0.0
    click.echo(f"{'query':<12}{'recall@' + str(k):>12}")
    for qid in sorted(recalls):
        click.echo(f"{qid:<12}{100.0 * recalls[qid]:>11.2f}%")
    click.echo(f"{'mean':<12}{mean:>11.2f}%  ({len(recalls)} queries, {len(skipped)} skipped)")

    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query_id", f"recall@{k}"])
            for qid in sorted(recalls):
                writer.writerow([qid, f"{recalls[qid]:.6f}"])
    if jsonl_path:
        with open(jsonl_path, "w", encoding="utf-8") as fh:
            for qid in sorted(recalls):
                fh.write(json.dumps({"query_id": qid, f"recall@{k}": recalls[qid]}) + "\n")
            fh.write(json.dumps({"mean_recall_pct": mean, "queries": len(recalls),
                                 "skipped": len(skipped)}) + "\n")


@main.command("tune")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--vectors", "vec_path", required=True, type=click.Path(exists=True))
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--qrels", "qrels_path", required=True, type=click.Path(exists=True))
@click.option("--grid-file", required=True, type=click.Path(exists=True),
              help='JSON: {"method": ..., "grid": [{...}, ...]}')
@click.option("--folds", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def tune(ctx, corpus_path, index_path, vec_path, graph_path, emb_path,
         queries_path, qrels_path, grid_file, folds, k, seed):
    """Cross-validated parameter sweep."""
    context = _load_context(corpus_path, index_path, vec_path, graph_path, emb_path)
    grid_spec = json.loads(Path(grid_file).read_text(encoding="utf-8"))
    spec = SweepSpec(
        method=grid_spec["method"],
        grid=tuple(grid_spec["grid"]),
        folds=_opt(ctx, "folds", folds, 5),
        rng_seed=_opt(ctx, "seed", seed, 0),
    )
    queries = read_queries(queries_path)
    qrels = load_qrels(qrels_path)
    report = sweep_and_cv(spec, context, queries, qrels, _opt(ctx, "k", k, 1000))
    for f, (params, recall) in enumerate(zip(report.fold_best_params, report.fold_test_recall)):
        click.echo(f"fold {f}: best {params} -> test recall {100.0 * recall:.2f}%")
    click.echo(f"cv mean recall@{report.k}: {100.0 * report.mean_test_recall:.2f}%")


@main.command("gen-synthetic")
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--n-docs", type=int, default=None)
@click.option("--n-queries", type=int, default=None)
@click.option("--dim", type=int, default=None)
@click.pass_context
def gen_synthetic(ctx, seed, out, n_docs, n_queries, dim):
    """Generate the deterministic vocabulary-mismatch corpus."""
    data = generate_mismatch_corpus(
        seed=_opt(ctx, "seed", seed, 0),
        n_docs=_opt(ctx, "n_docs", n_docs, 5000),
        n_queries=_opt(ctx, "n_queries", n_queries, 50),
        dim=_opt(ctx, "dim", dim, 32),
    )
    data.write(out)
    click.echo(f"synthetic corpus: {len(data.corpus_jsonl)} docs, "
               f"{len(data.queries)} queries -> {out}")


if __name__ == "__main__":
    sys.exit(main())
