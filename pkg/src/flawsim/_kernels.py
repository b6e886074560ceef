"""Compiled inner loop for the Chebyshev recurrence (numpy fallback if numba is absent)."""

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _cheb_step_py(masks, diag, cur, prev, alpha, beta):
    idx = np.arange(cur.shape[0])
    acc = -beta * cur
    for m, d in zip(masks, diag):
        acc += (alpha * d)[:, None] * cur[idx ^ m]
    prev *= -1
    prev += acc


if numba is not None:

    @numba.njit(cache=True)
    def _cheb_step_nb(masks, diag, cur, prev, alpha, beta):
        dim, width = cur.shape
        acc = np.empty(width)
        for r in range(dim):
            for k in range(width):
                acc[k] = -beta * cur[r, k]
            for m in range(masks.shape[0]):
                c = alpha * diag[m, r]
                src = r ^ masks[m]
                for k in range(width):
                    acc[k] += c * cur[src, k]
            for k in range(width):
                prev[r, k] = acc[k] - prev[r, k]

    cheb_step = _cheb_step_nb
else:  # pragma: no cover
    cheb_step = _cheb_step_py
