# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled composite-chamfer kernels.

Bit-for-bit mirror of ``_ccd_python``: distances are
sqrt((dx*dx + dy*dy) + dz*dz), comparisons use the post-sqrt distance with
strict less-than (first candidate wins ties), and all accumulation happens
in input order. Compiled with -ffp-contract=off so no FMA contraction can
perturb the arithmetic.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF ZERO_GUARD = 1e-12


def fidelity_forward_backward(const double[:, ::1] x, const double[:, ::1] pool,
                              const cnp.int64_t[::1] starts, const double[::1] a):
    cdef Py_ssize_t n_input = x.shape[0]
    cdef Py_ssize_t n_pool = pool.shape[0]
    cdef Py_ssize_t n_edges = starts.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nn_dist = np.empty(n_pool, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nn_idx = np.empty(n_pool, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad_pool = np.zeros((n_pool, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_a = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] nn_dist_v = nn_dist
    cdef cnp.int64_t[::1] nn_idx_v = nn_idx
    cdef double[:, ::1] grad_pool_v = grad_pool
    cdef double[::1] grad_a_v = grad_a

    cdef Py_ssize_t s, j, e, best_j
    cdef double dx, dy, dz, d, best_d, s_e, coeff, value

    for s in range(n_pool):
        best_d = 0.0
        best_j = -1
        for j in range(n_input):
            dx = pool[s, 0] - x[j, 0]
            dy = pool[s, 1] - x[j, 1]
            dz = pool[s, 2] - x[j, 2]
            d = sqrt((dx * dx + dy * dy) + dz * dz)
            if best_j < 0 or d < best_d:
                best_d = d
                best_j = j
        nn_dist_v[s] = best_d
        nn_idx_v[s] = best_j

    value = 0.0
    for e in range(n_edges):
        s_e = 0.0
        for s in range(starts[e], starts[e + 1]):
            s_e = s_e + nn_dist_v[s]
        grad_a_v[e] = s_e
        value = value + a[e] * s_e

    for e in range(n_edges):
        for s in range(starts[e], starts[e + 1]):
            d = nn_dist_v[s]
            if d >= ZERO_GUARD:
                j = nn_idx_v[s]
                coeff = a[e] / d
                grad_pool_v[s, 0] = coeff * (pool[s, 0] - x[j, 0])
                grad_pool_v[s, 1] = coeff * (pool[s, 1] - x[j, 1])
                grad_pool_v[s, 2] = coeff * (pool[s, 2] - x[j, 2])
    return value, grad_pool, grad_a


def coverage_forward_backward(const double[:, ::1] x, const double[:, ::1] pool,
                              const cnp.int64_t[::1] starts, const double[::1] a,
                              double gamma):
    cdef Py_ssize_t n_input = x.shape[0]
    cdef Py_ssize_t n_edges = starts.shape[0] - 1
    cdef Py_ssize_t n_pool = pool.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad_pool = np.zeros((n_pool, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_a = np.zeros(n_edges, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] sel_edges = np.empty(n_input * n_edges, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] sel_counts = np.zeros(n_input, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] saturated = np.zeros(n_input, dtype=np.uint8)
    cdef double[:, ::1] grad_pool_v = grad_pool
    cdef double[::1] grad_a_v = grad_a
    cdef cnp.int32_t[::1] sel_edges_v = sel_edges
    cdef cnp.int32_t[::1] sel_counts_v = sel_counts
    cdef cnp.uint8_t[::1] saturated_v = saturated

    cdef cnp.ndarray[cnp.float64_t, ndim=1] cand_d = np.empty(n_edges, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cand_i = np.empty(n_edges, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used = np.empty(n_edges, dtype=np.uint8)
    cdef double[::1] cand_d_v = cand_d
    cdef cnp.int64_t[::1] cand_i_v = cand_i
    cdef cnp.uint8_t[::1] used_v = used

    cdef Py_ssize_t q, e, s, best_i, pick, taken, cursor, pt
    cdef double dx, dy, dz, d, best_d, pick_d, w, coeff, value

    value = 0.0
    cursor = 0
    for q in range(n_input):
        for e in range(n_edges):
            best_d = 0.0
            best_i = -1
            for s in range(starts[e], starts[e + 1]):
                dx = pool[s, 0] - x[q, 0]
                dy = pool[s, 1] - x[q, 1]
                dz = pool[s, 2] - x[q, 2]
                d = sqrt((dx * dx + dy * dy) + dz * dz)
                if best_i < 0 or d < best_d:
                    best_d = d
                    best_i = s
            cand_d_v[e] = best_d
            cand_i_v[e] = best_i
            used_v[e] = 0

        w = 0.0
        taken = 0
        while True:
            pick = -1
            pick_d = 0.0
            for e in range(n_edges):
                if used_v[e] == 0 and (pick < 0 or cand_d_v[e] < pick_d):
                    pick_d = cand_d_v[e]
                    pick = e
            if pick < 0:
                break
            used_v[pick] = 1
            d = cand_d_v[pick]
            value = value + a[pick] * d
            grad_a_v[pick] = grad_a_v[pick] + d
            if d >= ZERO_GUARD:
                pt = cand_i_v[pick]
                coeff = a[pick] / d
                grad_pool_v[pt, 0] = grad_pool_v[pt, 0] + coeff * (pool[pt, 0] - x[q, 0])
                grad_pool_v[pt, 1] = grad_pool_v[pt, 1] + coeff * (pool[pt, 1] - x[q, 1])
                grad_pool_v[pt, 2] = grad_pool_v[pt, 2] + coeff * (pool[pt, 2] - x[q, 2])
            sel_edges_v[cursor + taken] = <cnp.int32_t> pick
            taken += 1
            w = w + a[pick]
            if w >= 1.0:
                saturated_v[q] = 1
                break
        if w < 1.0:
            value = value + gamma * (1.0 - w)
            for s in range(taken):
                grad_a_v[sel_edges_v[cursor + s]] = grad_a_v[sel_edges_v[cursor + s]] - gamma
        sel_counts_v[q] = <cnp.int32_t> taken
        cursor += taken
    return value, grad_pool, grad_a, sel_edges[:cursor].copy(), sel_counts, saturated
