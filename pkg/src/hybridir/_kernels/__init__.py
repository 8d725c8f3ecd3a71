"""Kernel backend selection.

The hot loops of graph construction (candidate local joins and bounded
neighbor-list insertion) exist twice: a Cython extension (`_cy`) and a pure
numpy/Python fallback (`_py`) with identical semantics. The compiled
backend is preferred; set HYBRIDIR_PURE=1 to force the fallback.

Both backends expose:

    propose_joins(unit_vecs, new_ids, new_counts, old_ids, old_counts,
                  heap_ids, heap_sims, lo, hi) -> (p, q, sim) arrays
    apply_joins(heap_ids, heap_sims, heap_new, p, q, sim) -> update count
"""

import os

if os.environ.get("HYBRIDIR_PURE") == "1":
    from . import _py as _impl

    BACKEND = "pure"
else:
    try:
        from . import _cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _py as _impl

        BACKEND = "pure"

propose_joins = _impl.propose_joins
apply_joins = _impl.apply_joins
