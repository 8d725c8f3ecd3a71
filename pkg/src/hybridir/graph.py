"""k-NN graph index over document vectors.

Construction uses NN-Descent: the graph starts from random neighbor lists
and is iteratively refined by local joins among sampled neighbors (and
reverse neighbors), exploiting that neighbors of neighbors are likely
neighbors. Edges of the finished graph are additionally reversed so search
can traverse the graph as undirected.

Every neighbor list is sorted by (cosine desc, doc_id asc); all randomness
flows from explicit seeds, and construction results are independent of the
thread count (proposals are generated against a per-block snapshot and
applied serially in canonical order).
"""

from __future__ import annotations

import heapq
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .embeddings import DocVector, VectorStore
from .inverted import ScoredDoc
from .textpipe import FormatError

GRAPH_MAGIC = b"HYIRKNNG"
GRAPH_VERSION = 1

_JOIN_BLOCK = 512  # nodes per local-join block; fixed so results don't depend on threads


class GraphBuildError(ValueError):
    """Raised when there are too few vectorized documents to build a graph."""


class VectorlessQueryError(ValueError):
    """Raised for graph searches with a zero query vector; callers should
    fall back to symbolic-only search."""


@dataclass(frozen=True)
class NnDescentParams:
    k: int = 20
    sample_rate: float = 0.5
    termination_threshold: float = 0.001
    max_iters: int = 30
    rng_seed: int = 0
    # refinement runs on neighbor lists of ceil(build_degree_factor * k)
    # entries, truncated to k at the end; small k alone converges poorly on
    # high-dimensional data while the head of a longer refined list is exact
    build_degree_factor: float = 3.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must be in (0, 1]")
        if self.build_degree_factor < 1.0:
            raise ValueError("build_degree_factor must be >= 1.0")


@dataclass(frozen=True)
class GraphSearchParams:
    pool_size: int = 100  # candidates kept during greedy traversal
    n_starts: int = 10
    rng_seed: int = 0
    # extra expansions allowed after the strict best-first stop criterion
    # (best unexplored worse than the worst kept) first fires; pure greedy
    # termination measurably under-recalls on high-dimensional data
    patience: int = 50


class KnnGraph:
    """Forward k-NN adjacency plus its exact transpose.

    Internal adjacency uses node positions (rows of the vectorized-document
    subset); `node_ids` maps positions back to doc_ids.
    """

    def __init__(
        self,
        k: int,
        node_ids: np.ndarray,
        forward_pos: np.ndarray,
        forward_sims: np.ndarray,
        params: NnDescentParams,
        method: str,
    ):
        self.k = k
        self.node_ids = node_ids  # ascending doc_ids of vectorized docs
        self.forward_pos = forward_pos  # (M, kk) positions
        self.forward_sims = forward_sims  # (M, kk) float32
        self.params = params
        self.method = method  # "nn_descent" | "brute_force"
        self._pos_of = {int(d): i for i, d in enumerate(node_ids)}
        self.rev_indptr, self.rev_pos = _transpose(forward_pos, len(node_ids))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def degree(self) -> int:
        return self.forward_pos.shape[1]

    def position(self, doc_id: int) -> int | None:
        return self._pos_of.get(int(doc_id))

    def neighbors(self, doc_id: int) -> list[int]:
        """Forward k-NN doc_ids by direct lookup; [] for vectorless or
        unknown doc_ids. No similarity computation happens here."""
        pos = self._pos_of.get(int(doc_id))
        if pos is None:
            return []
        return [int(d) for d in self.node_ids[self.forward_pos[pos]]]

    def adjacency(self, pos: int) -> np.ndarray:
        """Undirected search adjacency: forward union reverse, as positions."""
        rev = self.rev_pos[self.rev_indptr[pos] : self.rev_indptr[pos + 1]]
        return np.unique(np.concatenate([self.forward_pos[pos], rev]))

    def save(self, path: str | Path) -> None:
        save_graph(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "KnnGraph":
        return load_graph(path)


def _transpose(forward_pos: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """CSR transpose of the forward adjacency; in-lists sorted ascending."""
    targets = forward_pos.ravel()
    sources = np.repeat(np.arange(m, dtype=np.int64), forward_pos.shape[1])
    order = np.lexsort((sources, targets))
    counts = np.bincount(targets, minlength=m)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, sources[order]


def _vectorized_nodes(vectors: VectorStore) -> np.ndarray:
    return np.nonzero(~vectors.vectorless)[0].astype(np.int64)


def _sort_rows_by_sim(ids: np.ndarray, sims: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise sort by (sim desc, id asc) after float32 quantization."""
    for i in range(ids.shape[0]):
        order = np.lexsort((ids[i], -sims[i]))
        ids[i] = ids[i][order]
        sims[i] = sims[i][order]
    return ids, sims


def build_nn_descent(
    vectors: VectorStore,
    params: NnDescentParams = NnDescentParams(),
    threads: int = 1,
) -> KnnGraph:
    """Approximate k-NN graph by NN-Descent over cosine similarity.

    Deterministic given params.rng_seed, for any thread count.
    """
    node_ids = _vectorized_nodes(vectors)
    m = len(node_ids)
    if m < 2:
        raise GraphBuildError(f"need at least 2 vectorized documents, have {m}")
    kk = min(params.k, m - 1)
    work_k = min(m - 1, max(kk, math.ceil(params.build_degree_factor * params.k)))
    unit = np.ascontiguousarray(vectors.unit_rows(node_ids))
    rng = np.random.default_rng(params.rng_seed)

    heap_ids = np.empty((m, work_k), dtype=np.int64)
    heap_sims = np.empty((m, work_k), dtype=np.float64)
    heap_new = np.ones((m, work_k), dtype=np.uint8)

    for i in range(m):
        cands = rng.choice(m - 1, size=work_k, replace=False).astype(np.int64)
        cands[cands >= i] += 1
        sims = unit[cands] @ unit[i]
        order = np.lexsort((cands, -sims))
        heap_ids[i] = cands[order]
        heap_sims[i] = sims[order]

    max_cand = max(1, int(round(params.sample_rate * work_k)))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(params.max_iters):
            new_lists, old_lists = _sample_candidates(heap_ids, heap_new, max_cand, rng)
            new_ids, new_counts = _pad(new_lists)
            old_ids, old_counts = _pad(old_lists)

            updates = 0
            for lo in range(0, m, _JOIN_BLOCK):
                hi = min(lo + _JOIN_BLOCK, m)
                if pool is None:
                    props = _kernels.propose_joins(
                        unit, new_ids, new_counts, old_ids, old_counts,
                        heap_ids, heap_sims, lo, hi,
                    )
                else:
                    bounds = np.linspace(lo, hi, threads + 1).astype(int)
                    futures = [
                        pool.submit(
                            _kernels.propose_joins,
                            unit, new_ids, new_counts, old_ids, old_counts,
                            heap_ids, heap_sims, int(a), int(b),
                        )
                        for a, b in zip(bounds[:-1], bounds[1:])
                        if b > a
                    ]
                    parts = [f.result() for f in futures]
                    props = tuple(np.concatenate(x) for x in zip(*parts))
                updates += _kernels.apply_joins(heap_ids, heap_sims, heap_new, *props)

            if updates <= params.termination_threshold * m * work_k:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    forward_sims = heap_sims[:, :kk].astype(np.float32)
    forward_pos, forward_sims = _sort_rows_by_sim(heap_ids[:, :kk].copy(), forward_sims)
    return KnnGraph(params.k, node_ids, forward_pos, forward_sims, params, "nn_descent")


def _sample_candidates(heap_ids, heap_new, max_cand, rng):
    """Sample forward new/old neighbor lists (rate-limited to max_cand) plus
    reverse lists built from the sampled edges, themselves rate-limited.
    Sampled-new entries get their 'new' flag cleared."""
    m = heap_ids.shape[0]
    fwd_new: list[np.ndarray] = []
    fwd_old: list[np.ndarray] = []
    rev_new: list[list[int]] = [[] for _ in range(m)]
    rev_old: list[list[int]] = [[] for _ in range(m)]

    for i in range(m):
        new_slots = np.nonzero(heap_new[i])[0]
        old_slots = np.nonzero(heap_new[i] == 0)[0]
        if len(new_slots) > max_cand:
            new_slots = rng.choice(new_slots, size=max_cand, replace=False)
            new_slots.sort()
        if len(old_slots) > max_cand:
            old_slots = rng.choice(old_slots, size=max_cand, replace=False)
            old_slots.sort()
        heap_new[i, new_slots] = 0
        ni = heap_ids[i, new_slots]
        oi = heap_ids[i, old_slots]
        fwd_new.append(ni)
        fwd_old.append(oi)
        for j in ni:
            rev_new[j].append(i)
        for j in oi:
            rev_old[j].append(i)

    new_lists = []
    old_lists = []
    for i in range(m):
        rn = np.asarray(rev_new[i], dtype=np.int64)
        ro = np.asarray(rev_old[i], dtype=np.int64)
        if len(rn) > max_cand:
            rn = rng.choice(rn, size=max_cand, replace=False)
        if len(ro) > max_cand:
            ro = rng.choice(ro, size=max_cand, replace=False)
        new_lists.append(np.unique(np.concatenate([fwd_new[i], rn])))
        old_lists.append(np.unique(np.concatenate([fwd_old[i], ro])))
    return new_lists, old_lists


def _pad(lists: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    counts = np.array([len(x) for x in lists], dtype=np.int64)
    cap = max(1, int(counts.max()))
    padded = np.full((len(lists), cap), -1, dtype=np.int64)
    for i, x in enumerate(lists):
        padded[i, : len(x)] = x
    return padded, counts


def _row_top_k(sims: np.ndarray, self_pos: int, kk: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-kk of one similarity row under (sim desc, id asc), self excluded."""
    s = sims.copy()
    s[self_pos] = -np.inf
    m = len(s)
    if m > 4 * kk:
        thresh = np.partition(s, m - kk)[m - kk]
        cand = np.nonzero(s >= thresh)[0]
    else:
        cand = np.arange(m)
    order = np.lexsort((cand, -s[cand]))[:kk]
    picked = cand[order]
    return picked.astype(np.int64), s[picked]


def brute_force_knn(vectors: VectorStore, k: int) -> KnnGraph:
    """Exact k-NN graph by full pairwise cosine; oracle for tests and the
    graph-precision estimate. Same tie rule as NN-Descent output."""
    node_ids = _vectorized_nodes(vectors)
    m = len(node_ids)
    if m < 2:
        raise GraphBuildError(f"need at least 2 vectorized documents, have {m}")
    kk = min(k, m - 1)
    unit = vectors.unit_rows(node_ids)

    forward_pos = np.empty((m, kk), dtype=np.int64)
    forward_sims = np.empty((m, kk), dtype=np.float64)
    block = max(1, 2**22 // max(1, m))
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        sim_block = unit[lo:hi] @ unit.T
        for i in range(lo, hi):
            ids, sims = _row_top_k(sim_block[i - lo], i, kk)
            forward_pos[i] = ids
            forward_sims[i] = sims

    sims32 = forward_sims.astype(np.float32)
    forward_pos, sims32 = _sort_rows_by_sim(forward_pos, sims32)
    return KnnGraph(k, node_ids, forward_pos, sims32, NnDescentParams(k=k), "brute_force")


def estimate_graph_precision(
    graph: KnnGraph,
    vectors: VectorStore,
    sample_size: int,
    rng_seed: int = 0,
) -> float:
    """Mean over sampled nodes of |approx k-NN  intersect  true k-NN| / kk,
    with the true lists computed by exact pairwise cosine."""
    m = graph.n_nodes
    if sample_size > m:
        raise ValueError(f"sample_size {sample_size} exceeds node count {m}")
    kk = graph.degree
    rng = np.random.default_rng(rng_seed)
    sample = rng.choice(m, size=sample_size, replace=False)
    unit = vectors.unit_rows(graph.node_ids)

    total = 0.0
    block = max(1, 2**22 // max(1, m))
    for lo in range(0, len(sample), block):
        chunk = sample[lo : lo + block]
        sim_block = unit[chunk] @ unit.T
        for row, pos in enumerate(chunk):
            true_ids, _ = _row_top_k(sim_block[row], int(pos), kk)
            approx = graph.forward_pos[pos]
            total += len(np.intersect1d(true_ids, approx)) / kk
    return total / len(sample)


def graph_search(
    graph: KnnGraph,
    vectors: VectorStore,
    query: DocVector,
    n: int,
    params: GraphSearchParams = GraphSearchParams(),
) -> list[ScoredDoc]:
    """Greedy best-first traversal: seed the pool with random nodes, then
    repeatedly expand the most similar unexplored candidate over the
    undirected adjacency, keeping the best pool_size candidates. Stops once
    the best unexplored candidate has been worse than the worst kept one
    for more than `patience` expansions."""
    if query.vectorless:
        raise VectorlessQueryError(
            "query has no embedded terms; fall back to symbolic-only search"
        )
    ef = params.pool_size
    if n > ef:
        raise ValueError(f"n ({n}) must not exceed pool_size ({ef})")
    m = graph.n_nodes
    unit = vectors.unit_rows(graph.node_ids)
    q_unit = query.vec.astype(np.float64) / query.norm

    rng = np.random.default_rng(params.rng_seed)
    starts = rng.choice(m, size=min(params.n_starts, m), replace=False)
    starts.sort()

    visited = np.zeros(m, dtype=bool)
    visited[starts] = True
    sims = unit[starts] @ q_unit

    frontier: list[tuple[float, int]] = []  # (-sim, pos): unexplored candidates
    pool: list[tuple[float, int]] = []  # (sim, -pos) min-heap of best ef
    for pos, s in zip(starts, sims):
        heapq.heappush(frontier, (-float(s), int(pos)))
        _pool_push(pool, ef, float(s), int(pos))

    fails = 0
    while frontier:
        neg_s, pos = heapq.heappop(frontier)
        if len(pool) == ef and (-neg_s, -pos) <= pool[0]:
            fails += 1
            if fails > params.patience:
                break
        nbrs = graph.adjacency(pos)
        nbrs = nbrs[~visited[nbrs]]
        if len(nbrs) == 0:
            continue
        visited[nbrs] = True
        nsims = unit[nbrs] @ q_unit
        for npos, ns in zip(nbrs, nsims):
            heapq.heappush(frontier, (-float(ns), int(npos)))
            _pool_push(pool, ef, float(ns), int(npos))

    best = sorted(pool, key=lambda e: (-e[0], -e[1]))[:n]
    return [ScoredDoc(doc_id=int(graph.node_ids[-neg]), score=s) for s, neg in best]


def _pool_push(pool: list, ef: int, sim: float, pos: int) -> None:
    entry = (sim, -pos)
    if len(pool) < ef:
        heapq.heappush(pool, entry)
    elif entry > pool[0]:
        heapq.heapreplace(pool, entry)


# --- on-disk layout -----------------------------------------------------------
#
#   magic 'HYIRKNNG', u32 version
#   u32 k, u32 kk, u64 M, u8 method (0 nn_descent / 1 brute_force)
#   build params: f64 sample_rate, f64 termination_threshold,
#                 u32 max_iters, u64 rng_seed, f64 build_degree_factor
#   node_ids: M x i64
#   forward adjacency: M x kk x (i64 neighbor doc_id), then M x kk x f32 cosine
#   reverse adjacency: (M+1) x i64 offsets, then E x i64 source doc_ids


def save_graph(graph: KnnGraph, path: str | Path) -> None:
    method_code = 0 if graph.method == "nn_descent" else 1
    p = graph.params
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<I", GRAPH_VERSION))
        fh.write(struct.pack("<IIQB", graph.k, graph.degree, graph.n_nodes, method_code))
        fh.write(struct.pack("<ddIQd", p.sample_rate, p.termination_threshold,
                             p.max_iters, p.rng_seed, p.build_degree_factor))
        fh.write(np.ascontiguousarray(graph.node_ids, dtype=np.int64).tobytes())
        nbr_doc_ids = graph.node_ids[graph.forward_pos]
        fh.write(np.ascontiguousarray(nbr_doc_ids, dtype=np.int64).tobytes())
        fh.write(np.ascontiguousarray(graph.forward_sims, dtype=np.float32).tobytes())
        fh.write(np.ascontiguousarray(graph.rev_indptr, dtype=np.int64).tobytes())
        rev_doc_ids = graph.node_ids[graph.rev_pos]
        fh.write(np.ascontiguousarray(rev_doc_ids, dtype=np.int64).tobytes())


def load_graph(path: str | Path) -> KnnGraph:
    data = Path(path).read_bytes()
    if data[:8] != GRAPH_MAGIC:
        raise FormatError(f"{path}: bad magic")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != GRAPH_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    k, kk, m, method_code = struct.unpack_from("<IIQB", data, off)
    off += struct.calcsize("<IIQB")
    rate, thresh, max_iters, seed, degree_factor = struct.unpack_from("<ddIQd", data, off)
    off += struct.calcsize("<ddIQd")

    node_ids = np.frombuffer(data, dtype=np.int64, count=m, offset=off).copy()
    off += 8 * m
    nbr_doc_ids = np.frombuffer(data, dtype=np.int64, count=m * kk, offset=off).reshape(m, kk)
    off += 8 * m * kk
    forward_sims = (
        np.frombuffer(data, dtype=np.float32, count=m * kk, offset=off).reshape(m, kk).copy()
    )
    # reverse adjacency is rebuilt from the forward edges on construction
    forward_pos = np.searchsorted(node_ids, nbr_doc_ids).astype(np.int64)
    params = NnDescentParams(
        k=k, sample_rate=rate, termination_threshold=thresh,
        max_iters=max_iters, rng_seed=seed, build_degree_factor=degree_factor,
    )
    method = "nn_descent" if method_code == 0 else "brute_force"
    return KnnGraph(k, node_ids, forward_pos, forward_sims, params, method)
