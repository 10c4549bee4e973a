# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels for the hot inner loops.

The whole package funnels its per-replicate work (treated-neighbor counts,
normalized adjacency products, linear-in-means iterations) through
``neighbor_sum``, so this is the only loop worth compiling.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def neighbor_sum(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                 cnp.float64_t[::1] v):
    """out[i] = sum of v[j] over the CSR row i given by indptr/indices."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out_v = out
    cdef Py_ssize_t i, j
    cdef cnp.float64_t acc
    for i in range(n):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += v[indices[j]]
        out_v[i] = acc
    return out
