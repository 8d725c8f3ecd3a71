import numpy as np
import pytest

from hybridir.embeddings import DocVector
from hybridir.graph import (
    GraphBuildError,
    GraphSearchParams,
    NnDescentParams,
    VectorlessQueryError,
    brute_force_knn,
    build_nn_descent,
    estimate_graph_precision,
    graph_search,
)

from .conftest import gaussian_store, store_from
from .oracles import knn_quadratic


def query_from(vals):
    v = np.asarray(vals, dtype=np.float32)
    return DocVector(doc_id=-1, vec=v, norm=float(np.linalg.norm(v.astype(np.float64))))


# --- brute-force oracle graph -------------------------------------------------


def test_brute_force_orthonormal_tie_rule():
    store = store_from(np.eye(5))
    graph = brute_force_knn(store, k=2)
    for pos in range(5):
        nbrs = graph.neighbors(int(graph.node_ids[pos]))
        expected = [d for d in range(5) if d != pos][:2]
        assert nbrs == expected
        np.testing.assert_allclose(graph.forward_sims[pos], [0.0, 0.0], atol=1e-7)


def test_brute_force_no_self_loops():
    store = gaussian_store(60, 8, seed=3)
    graph = brute_force_knn(store, k=5)
    for pos in range(graph.n_nodes):
        assert pos not in graph.forward_pos[pos]
        assert len(set(graph.forward_pos[pos].tolist())) == 5


def test_brute_force_matches_quadratic_oracle():
    store = gaussian_store(100, 16, seed=0)
    graph = brute_force_knn(store, k=6)
    want = knn_quadratic(store.matrix, k=6)
    for pos in range(100):
        doc_id = int(graph.node_ids[pos])
        got_ids = graph.neighbors(doc_id)
        want_ids = [j for _, j in want[doc_id]]
        assert got_ids == want_ids
        for s_got, (s_want, _) in zip(graph.forward_sims[pos], want[doc_id]):
            assert s_got == pytest.approx(s_want, abs=1e-6)


def test_brute_force_excludes_vectorless():
    rows = np.vstack([np.zeros(4), np.eye(4)])
    graph = brute_force_knn(store_from(rows), k=2)
    assert 0 not in graph.node_ids
    assert graph.n_nodes == 4
    assert graph.neighbors(0) == []


def test_graph_build_needs_two_vectors():
    with pytest.raises(GraphBuildError):
        brute_force_knn(store_from([[1.0, 0.0]]), k=1)
    with pytest.raises(GraphBuildError):
        build_nn_descent(store_from([[1.0, 0.0]]))


# --- NN-Descent ---------------------------------------------------------------


def test_nn_descent_collinear_points():
    # 50 collinear points c*(1,1): every pairwise cosine is 1, so the tie
    # rule forces each list to the k lowest other doc_ids; power-of-two
    # scales keep the unit vectors bit-identical so the ties are exact
    rows = np.array([[2.0**j, 2.0**j] for j in range(50)], dtype=np.float32)
    store = store_from(rows)
    graph = build_nn_descent(store, NnDescentParams(k=5, rng_seed=1))
    oracle = brute_force_knn(store, k=5)
    assert estimate_graph_precision(graph, store, sample_size=50) == 1.0
    np.testing.assert_array_equal(graph.forward_pos, oracle.forward_pos)


def test_nn_descent_k1_three_vectors():
    store = store_from([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
    graph = build_nn_descent(store, NnDescentParams(k=1, rng_seed=0))
    oracle = brute_force_knn(store, k=1)
    np.testing.assert_array_equal(graph.forward_pos, oracle.forward_pos)


def test_nn_descent_duplicate_vectors():
    rng = np.random.default_rng(5)
    base = rng.standard_normal((20, 8))
    rows = np.vstack([base, base[3], base[7]])  # rows 20, 21 duplicate 3, 7
    graph = build_nn_descent(store_from(rows), NnDescentParams(k=4, rng_seed=0))
    for a, b in [(3, 20), (20, 3), (7, 21), (21, 7)]:
        pos = graph.position(a)
        assert graph.forward_pos[pos][0] == b
        assert graph.forward_sims[pos][0] == pytest.approx(1.0, abs=1e-6)
        assert a not in graph.forward_pos[pos]


def test_nn_descent_matches_oracle_small_gaussian():
    store = gaussian_store(300, 8, seed=2)
    graph = build_nn_descent(store, NnDescentParams(k=10, rng_seed=0))
    assert estimate_graph_precision(graph, store, sample_size=300) >= 0.99


def test_estimate_precision_of_exact_graph_is_one():
    store = gaussian_store(150, 12, seed=4)
    graph = brute_force_knn(store, k=8)
    assert estimate_graph_precision(graph, store, sample_size=150) == 1.0


def test_estimate_precision_sample_bound():
    store = gaussian_store(20, 4, seed=0)
    graph = brute_force_knn(store, k=3)
    with pytest.raises(ValueError):
        estimate_graph_precision(graph, store, sample_size=21)


def test_nn_descent_deterministic_across_threads():
    store = gaussian_store(800, 16, seed=9)
    params = NnDescentParams(k=8, rng_seed=42)
    g1 = build_nn_descent(store, params, threads=1)
    g4 = build_nn_descent(store, params, threads=4)
    np.testing.assert_array_equal(g1.forward_pos, g4.forward_pos)
    np.testing.assert_array_equal(g1.forward_sims, g4.forward_sims)


def test_nn_descent_params_validation():
    with pytest.raises(ValueError):
        NnDescentParams(k=0)
    with pytest.raises(ValueError):
        NnDescentParams(sample_rate=0.0)
    with pytest.raises(ValueError):
        NnDescentParams(build_degree_factor=0.5)


# --- structural invariants ----------------------------------------------------


def test_transpose_consistency():
    store = gaussian_store(120, 8, seed=6)
    graph = build_nn_descent(store, NnDescentParams(k=6, rng_seed=0))
    n_edges = 0
    for pos in range(graph.n_nodes):
        for nbr in graph.forward_pos[pos]:
            rev = graph.rev_pos[graph.rev_indptr[nbr] : graph.rev_indptr[nbr + 1]]
            assert pos in rev
        n_edges += len(graph.forward_pos[pos])
    assert len(graph.rev_pos) == n_edges
    assert graph.rev_indptr[-1] == n_edges


def test_forward_lists_sorted_by_sim_then_id():
    store = gaussian_store(100, 8, seed=8)
    graph = build_nn_descent(store, NnDescentParams(k=5, rng_seed=0))
    for pos in range(graph.n_nodes):
        sims = graph.forward_sims[pos]
        ids = graph.forward_pos[pos]
        for j in range(len(sims) - 1):
            assert sims[j] > sims[j + 1] or (
                sims[j] == sims[j + 1] and ids[j] < ids[j + 1]
            )


def test_neighbors_contract():
    store = gaussian_store(50, 6, seed=1)
    graph = brute_force_knn(store, k=4)
    nbrs = graph.neighbors(10)
    assert len(nbrs) == 4
    assert 10 not in nbrs
    assert graph.neighbors(10_000) == []


# --- greedy search ------------------------------------------------------------


def test_graph_search_finds_exact_duplicate():
    rng = np.random.default_rng(3)
    clusters = rng.standard_normal((4, 12)) * 10
    rows = np.vstack([clusters[i % 4] + 0.05 * rng.standard_normal(12) for i in range(80)])
    store = store_from(rows)
    graph = build_nn_descent(store, NnDescentParams(k=6, rng_seed=0))
    q = query_from(rows[17])
    results = graph_search(graph, store, q, n=3, params=GraphSearchParams(pool_size=20))
    assert results[0].doc_id == 17
    assert results[0].score == pytest.approx(1.0, abs=1e-6)


def test_graph_search_small_component_full_ranking():
    store = gaussian_store(5, 6, seed=7)
    graph = brute_force_knn(store, k=4)  # fully connected on 5 nodes
    q = query_from(np.random.default_rng(0).standard_normal(6))
    results = graph_search(graph, store, q, n=5, params=GraphSearchParams(pool_size=10))
    assert sorted(d.doc_id for d in results) == [0, 1, 2, 3, 4]
    unit = store.unit_rows(np.arange(5))
    want = unit @ (q.vec.astype(np.float64) / q.norm)
    order = np.lexsort((np.arange(5), -want))
    assert [d.doc_id for d in results] == list(order)
    for d in results:
        assert d.score == pytest.approx(want[d.doc_id], abs=1e-9)


def test_graph_search_results_sorted():
    store = gaussian_store(400, 8, seed=5)
    graph = build_nn_descent(store, NnDescentParams(k=8, rng_seed=0))
    q = query_from(np.random.default_rng(1).standard_normal(8))
    results = graph_search(graph, store, q, n=20, params=GraphSearchParams(pool_size=50))
    for a, b in zip(results, results[1:]):
        assert a.score > b.score or (a.score == b.score and a.doc_id < b.doc_id)


def test_graph_search_vectorless_query_raises():
    store = gaussian_store(10, 4, seed=0)
    graph = brute_force_knn(store, k=3)
    with pytest.raises(VectorlessQueryError):
        graph_search(graph, store, query_from([0, 0, 0, 0]), n=2)


def test_graph_search_n_bounded_by_pool():
    store = gaussian_store(10, 4, seed=0)
    graph = brute_force_knn(store, k=3)
    with pytest.raises(ValueError):
        graph_search(graph, store, query_from([1, 0, 0, 0]), n=5,
                     params=GraphSearchParams(pool_size=4))


def test_graph_search_deterministic():
    store = gaussian_store(500, 8, seed=12)
    graph = build_nn_descent(store, NnDescentParams(k=8, rng_seed=0))
    q = query_from(np.random.default_rng(2).standard_normal(8))
    p = GraphSearchParams(pool_size=40, rng_seed=3)
    assert graph_search(graph, store, q, 10, p) == graph_search(graph, store, q, 10, p)


def test_graph_search_overlap_monotone_in_pool_size():
    store = gaussian_store(2000, 16, seed=13)
    graph = build_nn_descent(store, NnDescentParams(k=10, rng_seed=0))
    rng = np.random.default_rng(99)
    queries = rng.standard_normal((100, 16))
    unit = store.unit_rows(np.arange(2000))

    def mean_overlap(ef):
        total = 0.0
        for row in queries:
            q = query_from(row)
            got = {d.doc_id for d in graph_search(graph, store, q, 10,
                                                  GraphSearchParams(pool_size=ef))}
            sims = unit @ (q.vec.astype(np.float64) / q.norm)
            true = set(np.argsort(-sims)[:10].tolist())
            total += len(got & true) / 10
        return total / len(queries)

    overlaps = [mean_overlap(ef) for ef in (10, 30, 100)]
    for a, b in zip(overlaps, overlaps[1:]):
        assert b >= a - 0.01  # non-decreasing with 1% slack
