# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled min-sum decoder: same contract as the numpy module, scalar loops.

Messages are stored per edge in row-lane order; the variable lane an edge
touches at check lane ``a`` is ``(a + shift) mod z``.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def decode_batch(plan, double[:, ::1] llrs, double alpha, int max_iter):
    cdef int z = plan.z
    cdef int mb = plan.mb
    cdef int n_cols = plan.n_cols
    cdef int n_edges = plan.n_edges
    cdef int b_total = llrs.shape[0]
    cdef int n_vars = n_cols * z

    cdef int[::1] edge_col = np.ascontiguousarray(plan.edge_col, dtype=np.int32)
    cdef int[::1] edge_shift = np.ascontiguousarray(plan.edge_shift, dtype=np.int32)
    cdef int[::1] row_ptr = np.ascontiguousarray(plan.row_ptr, dtype=np.int32)

    bits_arr = np.zeros((b_total, n_vars), dtype=np.uint8)
    ok_arr = np.zeros(b_total, dtype=bool)
    iters_arr = np.full(b_total, max_iter, dtype=np.int32)
    cdef unsigned char[:, ::1] bits = bits_arr
    cdef unsigned char[::1] ok = ok_arr.view(np.uint8)
    cdef int[::1] iters = iters_arr

    v2c_arr = np.empty((n_edges, z), dtype=np.float64)
    c2v_arr = np.empty((n_edges, z), dtype=np.float64)
    totals_arr = np.empty(n_vars, dtype=np.float64)
    m1_arr = np.empty(z, dtype=np.float64)
    m2_arr = np.empty(z, dtype=np.float64)
    sp_arr = np.empty(z, dtype=np.float64)
    am_arr = np.empty(z, dtype=np.int32)
    cdef double[:, ::1] v2c = v2c_arr
    cdef double[:, ::1] c2v = c2v_arr
    cdef double[::1] totals = totals_arr
    cdef double[::1] m1 = m1_arr
    cdef double[::1] m2 = m2_arr
    cdef double[::1] sp = sp_arr
    cdef int[::1] am = am_arr

    cdef int b, it, r, e, a, lane, base, parity, converged
    cdef double val, mag, sgn

    for b in range(b_total):
        for e in range(n_edges):
            base = edge_col[e] * z
            for a in range(z):
                lane = a + edge_shift[e]
                if lane >= z:
                    lane -= z
                v2c[e, a] = llrs[b, base + lane]

        for it in range(1, max_iter + 1):
            # check-node pass
            for r in range(mb):
                for a in range(z):
                    m1[a] = 1e300
                    m2[a] = 1e300
                    sp[a] = 1.0
                    am[a] = -1
                for e in range(row_ptr[r], row_ptr[r + 1]):
                    for a in range(z):
                        val = v2c[e, a]
                        if val < 0:
                            sp[a] = -sp[a]
                            mag = -val
                        else:
                            mag = val
                        if mag < m1[a]:
                            m2[a] = m1[a]
                            m1[a] = mag
                            am[a] = e
                        elif mag < m2[a]:
                            m2[a] = mag
                for e in range(row_ptr[r], row_ptr[r + 1]):
                    for a in range(z):
                        val = v2c[e, a]
                        sgn = sp[a]
                        if val < 0:
                            sgn = -sgn
                        if e == am[a]:
                            c2v[e, a] = alpha * sgn * m2[a]
                        else:
                            c2v[e, a] = alpha * sgn * m1[a]

            # variable-node pass
            for a in range(n_vars):
                totals[a] = llrs[b, a]
            for e in range(n_edges):
                base = edge_col[e] * z
                for a in range(z):
                    lane = a + edge_shift[e]
                    if lane >= z:
                        lane -= z
                    totals[base + lane] += c2v[e, a]
            for e in range(n_edges):
                base = edge_col[e] * z
                for a in range(z):
                    lane = a + edge_shift[e]
                    if lane >= z:
                        lane -= z
                    v2c[e, a] = totals[base + lane] - c2v[e, a]

            # syndrome on current hard decisions
            converged = 1
            for r in range(mb):
                for a in range(z):
                    parity = 0
                    for e in range(row_ptr[r], row_ptr[r + 1]):
                        lane = a + edge_shift[e]
                        if lane >= z:
                            lane -= z
                        if totals[edge_col[e] * z + lane] < 0:
                            parity ^= 1
                    if parity:
                        converged = 0
                        break
                if not converged:
                    break
            if converged:
                iters[b] = it
                ok[b] = 1
                break

        for a in range(n_vars):
            bits[b, a] = 1 if totals[a] < 0 else 0

    return bits_arr, ok_arr, iters_arr
