"""Pure-numpy fallback for the CSR neighbor-sum kernel.

Uses a cumulative-sum trick so the work stays O(nnz) without a Python loop:
prefix sums of the gathered values let each row sum be read off as a
difference of two prefix entries.
"""

import numpy as np


def neighbor_sum(indptr, indices, v):
    """out[i] = sum of v[j] over the CSR row i given by indptr/indices."""
    prefix = np.empty(len(indices) + 1, dtype=np.float64)
    prefix[0] = 0.0
    np.cumsum(v[indices], out=prefix[1:])
    return prefix[indptr[1:]] - prefix[indptr[:-1]]
