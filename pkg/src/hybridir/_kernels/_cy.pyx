# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for graph construction: candidate local joins and
bounded neighbor-list insertion. Semantics mirror the pure backend (_py.py)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _dot(const double[:, ::1] u, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t d = u.shape[1]
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        acc += u[a, j] * u[b, j]
    return acc


def propose_joins(const double[:, ::1] unit_vecs,
                  const long long[:, ::1] new_ids,
                  const long long[::1] new_counts,
                  const long long[:, ::1] old_ids,
                  const long long[::1] old_counts,
                  const long long[:, ::1] heap_ids,
                  const double[:, ::1] heap_sims,
                  Py_ssize_t lo, Py_ssize_t hi):
    """Candidate pair generation for nodes [lo, hi); see the pure backend."""
    cdef Py_ssize_t kk = heap_ids.shape[1]
    cdef Py_ssize_t i, a, b, cn, co, p, q
    cdef long long bound = 0

    for i in range(lo, hi):
        cn = new_counts[i]
        co = old_counts[i]
        bound += cn * (cn - 1) // 2 + cn * co

    out_p_arr = np.empty(bound, dtype=np.int64)
    out_q_arr = np.empty(bound, dtype=np.int64)
    out_s_arr = np.empty(bound, dtype=np.float64)
    cdef long long[::1] out_p = out_p_arr
    cdef long long[::1] out_q = out_q_arr
    cdef double[::1] out_s = out_s_arr

    cdef Py_ssize_t n_out = 0
    cdef double s, worst_p
    with nogil:
        for i in range(lo, hi):
            cn = new_counts[i]
            co = old_counts[i]
            for a in range(cn):
                p = new_ids[i, a]
                worst_p = heap_sims[p, kk - 1]
                for b in range(a + 1, cn):
                    q = new_ids[i, b]
                    if p == q:
                        continue
                    s = _dot(unit_vecs, p, q)
                    if s >= worst_p or s >= heap_sims[q, kk - 1]:
                        out_p[n_out] = p
                        out_q[n_out] = q
                        out_s[n_out] = s
                        n_out += 1
                for b in range(co):
                    q = old_ids[i, b]
                    if p == q:
                        continue
                    s = _dot(unit_vecs, p, q)
                    if s >= worst_p or s >= heap_sims[q, kk - 1]:
                        out_p[n_out] = p
                        out_q[n_out] = q
                        out_s[n_out] = s
                        n_out += 1

    return out_p_arr[:n_out].copy(), out_q_arr[:n_out].copy(), out_s_arr[:n_out].copy()


cdef inline int _try_insert(long long[:, ::1] heap_ids,
                            double[:, ::1] heap_sims,
                            cnp.uint8_t[:, ::1] heap_new,
                            Py_ssize_t row, long long nid, double sim) noexcept nogil:
    cdef Py_ssize_t kk = heap_ids.shape[1]
    cdef Py_ssize_t last = kk - 1
    cdef double ws = heap_sims[row, last]
    cdef Py_ssize_t j
    if sim < ws or (sim == ws and nid >= heap_ids[row, last]):
        return 0
    for j in range(kk):
        if heap_ids[row, j] == nid:
            return 0
    j = last
    while j > 0 and (heap_sims[row, j - 1] < sim or
                     (heap_sims[row, j - 1] == sim and heap_ids[row, j - 1] > nid)):
        heap_ids[row, j] = heap_ids[row, j - 1]
        heap_sims[row, j] = heap_sims[row, j - 1]
        heap_new[row, j] = heap_new[row, j - 1]
        j -= 1
    heap_ids[row, j] = nid
    heap_sims[row, j] = sim
    heap_new[row, j] = 1
    return 1


def apply_joins(long long[:, ::1] heap_ids,
                double[:, ::1] heap_sims,
                cnp.uint8_t[:, ::1] heap_new,
                const long long[::1] p_arr,
                const long long[::1] q_arr,
                const double[::1] sim_arr):
    """Serially apply proposals in order; returns successful insert count."""
    cdef Py_ssize_t n = p_arr.shape[0]
    cdef Py_ssize_t i
    cdef long long count = 0
    with nogil:
        for i in range(n):
            count += _try_insert(heap_ids, heap_sims, heap_new, p_arr[i], q_arr[i], sim_arr[i])
            count += _try_insert(heap_ids, heap_sims, heap_new, q_arr[i], p_arr[i], sim_arr[i])
    return int(count)
