# Compiled kernels for the hot inner loops.  Semantics match
# numpy_impl.py; keep the two files in sync when editing either.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_sqdist(a, b):
    """All-pairs squared Euclidean distances, (N, D) x (M, D) -> (N, M)."""
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    cdef Py_ssize_t d = av.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double s, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    diff = av[i, k] - bv[j, k]
                    s = s + diff * diff
                out[i, j] = s
    return out_arr


def scatter_add_rows(idx, src, n_rows):
    """Accumulate rows of src (M, D) into a zero (n_rows, D) array at idx."""
    cdef const cnp.int64_t[::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(src, dtype=np.float64)
    cdef Py_ssize_t m = sv.shape[0]
    cdef Py_ssize_t d = sv.shape[1]
    out_arr = np.zeros((n_rows, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c
    cdef cnp.int64_t t
    with nogil:
        for r in range(m):
            t = iv[r]
            for c in range(d):
                out[t, c] += sv[r, c]
    return out_arr


def edge_features(h, idx):
    """Per-edge features [h_i, h_j - h_i], (N, C) x (N, K) -> (N, K, 2C)."""
    cdef const double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = hv.shape[0]
    cdef Py_ssize_t c = hv.shape[1]
    cdef Py_ssize_t k = iv.shape[1]
    out_arr = np.empty((n, k, 2 * c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, q, ch
    cdef cnp.int64_t j
    with nogil:
        for i in range(n):
            for q in range(k):
                j = iv[i, q]
                for ch in range(c):
                    out[i, q, ch] = hv[i, ch]
                    out[i, q, c + ch] = hv[j, ch] - hv[i, ch]
    return out_arr


def edge_features_grad(g, idx):
    """Adjoint of edge_features, (N, K, 2C) x (N, K) -> (N, C)."""
    cdef const double[:, :, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = gv.shape[0]
    cdef Py_ssize_t k = gv.shape[1]
    cdef Py_ssize_t c = gv.shape[2] // 2
    out_arr = np.zeros((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, q, ch
    cdef cnp.int64_t j
    with nogil:
        # center rows first, then neighbor scatter, matching numpy_impl
        for i in range(n):
            for q in range(k):
                for ch in range(c):
                    out[i, ch] += gv[i, q, ch] - gv[i, q, c + ch]
        for i in range(n):
            for q in range(k):
                j = iv[i, q]
                for ch in range(c):
                    out[j, ch] += gv[i, q, c + ch]
    return out_arr
