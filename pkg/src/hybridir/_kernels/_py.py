"""Pure numpy/Python kernel fallback.

Semantics must stay in lockstep with the Cython backend (_cy.pyx):
neighbor lists are fixed-size arrays sorted by (similarity desc, id asc),
and an insertion succeeds only if the candidate beats the worst entry
under that order and is not already present.
"""

from __future__ import annotations

import numpy as np


def propose_joins(unit_vecs, new_ids, new_counts, old_ids, old_counts,
                  heap_ids, heap_sims, lo, hi):
    """Candidate pair generation for nodes [lo, hi).

    For each node, pairs (new x new) and (new x old) are scored by dot
    product of unit vectors; a pair is proposed if its similarity could
    enter either endpoint's neighbor list. Pure function of the arrays:
    callers apply proposals separately.
    """
    kk = heap_ids.shape[1]
    ps: list[int] = []
    qs: list[int] = []
    sims: list[float] = []
    for i in range(lo, hi):
        cn = int(new_counts[i])
        co = int(old_counts[i])
        if cn == 0:
            continue
        cand = np.concatenate([new_ids[i, :cn], old_ids[i, :co]])
        vecs = unit_vecs[cand]
        sim_mat = vecs @ vecs.T
        for a in range(cn):
            p = int(cand[a])
            worst_p = heap_sims[p, kk - 1]
            for b_idx in range(a + 1, cn + co):
                q = int(cand[b_idx])
                if p == q:
                    continue
                s = float(sim_mat[a, b_idx])
                if s >= worst_p or s >= heap_sims[q, kk - 1]:
                    ps.append(p)
                    qs.append(q)
                    sims.append(s)
    return (
        np.asarray(ps, dtype=np.int64),
        np.asarray(qs, dtype=np.int64),
        np.asarray(sims, dtype=np.float64),
    )


def _try_insert(heap_ids, heap_sims, heap_new, row, nid, sim):
    kk = heap_ids.shape[1]
    last = kk - 1
    ws = heap_sims[row, last]
    if sim < ws or (sim == ws and nid >= heap_ids[row, last]):
        return 0
    for j in range(kk):
        if heap_ids[row, j] == nid:
            return 0
    j = last
    while j > 0 and (
        heap_sims[row, j - 1] < sim
        or (heap_sims[row, j - 1] == sim and heap_ids[row, j - 1] > nid)
    ):
        heap_ids[row, j] = heap_ids[row, j - 1]
        heap_sims[row, j] = heap_sims[row, j - 1]
        heap_new[row, j] = heap_new[row, j - 1]
        j -= 1
    heap_ids[row, j] = nid
    heap_sims[row, j] = sim
    heap_new[row, j] = True
    return 1


def apply_joins(heap_ids, heap_sims, heap_new, p_arr, q_arr, sim_arr):
    """Serially apply proposals in order; returns the number of successful
    insertions (each proposal is tried in both directions)."""
    count = 0
    for p, q, s in zip(p_arr, q_arr, sim_arr):
        count += _try_insert(heap_ids, heap_sims, heap_new, int(p), int(q), float(s))
        count += _try_insert(heap_ids, heap_sims, heap_new, int(q), int(p), float(s))
    return count
