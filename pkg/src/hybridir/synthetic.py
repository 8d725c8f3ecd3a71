"""Deterministic synthetic corpus with controlled vocabulary mismatch.

Each query owns two synonym groups. The group's primary term appears only
in the query and in that query's "exact" relevant documents; the remaining
group terms appear only in its "synonym-only" relevant documents. By
construction a term-matching searcher can reach exactly the exact fraction
of the relevant set, while all relevant documents of a query share nearly
the same embedding direction, so graph-based search can recover the
synonym-only ones.

Everything (corpus, queries, qrels, embeddings) is a pure function of the
seed: same seed, byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SyntheticData:
    corpus_jsonl: list[str]  # one JSON record per line, ingestion-ready
    queries: list[tuple[str, str]]  # (query_id, text)
    qrels: dict[str, dict[str, int]]
    embeddings_text: str  # standard 'count dim' text format
    # construction-time oracle: recall@K reachable by pure term matching,
    # per query (K >= number of exact docs assumed)
    exact_match_recall: dict[str, float]

    def write(self, outdir: str | Path) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "docs.jsonl").write_text("\n".join(self.corpus_jsonl) + "\n", encoding="utf-8")
        (outdir / "queries.tsv").write_text(
            "".join(f"{qid}\t{text}\n" for qid, text in self.queries), encoding="utf-8"
        )
        lines = []
        for qid in self.qrels:
            for ext_id, grade in self.qrels[qid].items():
                lines.append(f"{qid} 0 {ext_id} {grade}\n")
        (outdir / "qrels.txt").write_text("".join(lines), encoding="utf-8")
        (outdir / "embeddings.txt").write_text(self.embeddings_text, encoding="utf-8")


def generate_mismatch_corpus(
    seed: int = 0,
    n_docs: int = 5000,
    n_queries: int = 50,
    dim: int = 32,
    relevant_per_query: int = 20,
    synonym_only_frac: float = 0.3,
    group_size: int = 4,
    n_filler_terms: int = 800,
    filler_per_doc: int = 20,
    topical_per_doc: int = 10,
    synonym_noise: float = 0.08,
) -> SyntheticData:
    rng = np.random.default_rng(seed)

    n_syn = round(synonym_only_frac * relevant_per_query)
    n_exact = relevant_per_query - n_syn
    n_relevant_total = n_queries * relevant_per_query
    if n_relevant_total > n_docs:
        raise ValueError("n_docs too small for the requested relevant documents")
    n_background = n_docs - n_relevant_total

    # two synonym groups per query; terms within a group share a direction
    n_groups = 2 * n_queries
    group_terms = [[f"g{g}w{j}" for j in range(group_size)] for g in range(n_groups)]
    base = rng.standard_normal((n_groups, dim))
    base /= np.linalg.norm(base, axis=1, keepdims=True)

    term_vecs: dict[str, np.ndarray] = {}
    for g in range(n_groups):
        for term in group_terms[g]:
            v = base[g] + synonym_noise * rng.standard_normal(dim)
            term_vecs[term] = v / np.linalg.norm(v)
    filler = [f"f{j}" for j in range(n_filler_terms)]
    fv = rng.standard_normal((n_filler_terms, dim))
    fv /= np.linalg.norm(fv, axis=1, keepdims=True)
    for j, term in enumerate(filler):
        term_vecs[term] = fv[j]

    def filler_tokens(count: int) -> list[str]:
        return [filler[i] for i in rng.integers(0, n_filler_terms, size=count)]

    records: list[tuple[str, str]] = []  # (ext_id, text)
    queries: list[tuple[str, str]] = []
    qrels: dict[str, dict[str, int]] = {}
    exact_recall: dict[str, float] = {}

    for qi in range(n_queries):
        ga, gb = 2 * qi, 2 * qi + 1
        qid = f"q{qi}"
        queries.append((qid, f"{group_terms[ga][0]} {group_terms[gb][0]}"))
        qrels[qid] = {}
        exact_recall[qid] = n_exact / relevant_per_query

        primary = [group_terms[ga][0], group_terms[gb][0]]
        synonyms = group_terms[ga][1:] + group_terms[gb][1:]
        for j in range(n_exact):
            ext_id = f"q{qi}e{j}"
            topical = [primary[int(i)] for i in rng.integers(0, 2, size=topical_per_doc)]
            tokens = topical + filler_tokens(filler_per_doc)
            records.append((ext_id, " ".join(_shuffled(tokens, rng))))
            qrels[qid][ext_id] = 1
        for j in range(n_syn):
            ext_id = f"q{qi}s{j}"
            topical = [synonyms[int(i)] for i in rng.integers(0, len(synonyms), size=topical_per_doc)]
            tokens = topical + filler_tokens(filler_per_doc)
            records.append((ext_id, " ".join(_shuffled(tokens, rng))))
            qrels[qid][ext_id] = 1

    for j in range(n_background):
        records.append((f"bg{j}", " ".join(filler_tokens(filler_per_doc + topical_per_doc))))

    order = rng.permutation(len(records))
    corpus_jsonl = [
        json.dumps({"ext_id": records[i][0], "text": records[i][1]}, sort_keys=True)
        for i in order
    ]

    emb_lines = [f"{len(term_vecs)} {dim}"]
    for term in sorted(term_vecs):
        comps = " ".join(f"{x:.8f}" for x in term_vecs[term])
        emb_lines.append(f"{term} {comps}")
    embeddings_text = "\n".join(emb_lines) + "\n"

    return SyntheticData(
        corpus_jsonl=corpus_jsonl,
        queries=queries,
        qrels=qrels,
        embeddings_text=embeddings_text,
        exact_match_recall=exact_recall,
    )


def _shuffled(tokens: list[str], rng: np.random.Generator) -> list[str]:
    idx = rng.permutation(len(tokens))
    return [tokens[i] for i in idx]


def expected_bm25_recall(data: SyntheticData) -> float:
    """Mean over queries of the term-matching recall ceiling. Exact because
    each query's primary terms occur in no other document."""
    vals = list(data.exact_match_recall.values())
    return sum(vals) / len(vals)
