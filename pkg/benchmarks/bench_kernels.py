"""Compare the compiled and pure-Python graph-construction kernels.

Builds the same NN-Descent graph with each backend and reports wall time
plus the measured precision against the exact graph, at a few corpus sizes.

Usage: python3 benchmarks/bench_kernels.py [--sizes 1000,3000] [--dim 32] [--k 10]
"""

import argparse
import importlib
import time

import numpy as np


def fresh_build(backend: str, vectors, params, threads: int):
    """Reload the package with the requested backend forced, then build."""
    import os

    os.environ["HYBRIDIR_PURE"] = "1" if backend == "pure" else "0"
    import hybridir._kernels as kernels

    importlib.reload(kernels)
    import hybridir.graph as graph_mod

    importlib.reload(graph_mod)
    if kernels.BACKEND != backend:
        return None, None
    t0 = time.perf_counter()
    graph = graph_mod.build_nn_descent(vectors, params, threads=threads)
    return graph, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1000,3000", help="comma-separated corpus sizes")
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    from hybridir.embeddings import VectorStore
    from hybridir.graph import NnDescentParams, estimate_graph_precision

    params = NnDescentParams(k=args.k, rng_seed=args.seed)
    print(f"{'n_docs':>8} {'backend':>8} {'build_s':>9} {'precision':>10} {'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        rng = np.random.default_rng(args.seed)
        mat = rng.standard_normal((n, args.dim)).astype(np.float32)
        norms = np.linalg.norm(mat.astype(np.float64), axis=1)
        vectors = VectorStore(matrix=mat, norms=norms)

        times = {}
        for backend in ("cython", "pure"):
            graph, seconds = fresh_build(backend, vectors, params, args.threads)
            if graph is None:
                print(f"{n:>8} {backend:>8} {'n/a':>9} (backend unavailable)")
                continue
            times[backend] = seconds
            prec = estimate_graph_precision(graph, vectors, sample_size=min(n, 500))
            speedup = ""
            if backend == "pure" and "cython" in times:
                speedup = f"{times['pure'] / times['cython']:.1f}x"
            print(f"{n:>8} {backend:>8} {seconds:>9.2f} {prec:>10.4f} {speedup:>8}")


if __name__ == "__main__":
    main()
