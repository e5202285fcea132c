"""Compiled inner loops for the lag-polynomial recursions.

These are the only sequential O(T) loops in the estimator hot path, so they
are JIT-compiled; everything else is vectorised numpy.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def ma_invert(head: np.ndarray, ma: np.ndarray, out: np.ndarray) -> None:
    """Solve eps_t = head_t - sum_j ma[j] @ eps_{t-1-j} in place.

    ``head`` holds the data minus all non-recursive terms (intercept, AR and
    exogenous parts).  Rows before the start of ``head`` count as zero.
    """
    T, m = head.shape
    q = ma.shape[0]
    for t in range(T):
        for i in range(m):
            acc = head[t, i]
            for j in range(q):
                tj = t - 1 - j
                if tj >= 0:
                    for k in range(m):
                        acc -= ma[j, i, k] * out[tj, k]
            out[t, i] = acc


@njit(cache=True, nogil=True)
def varma_generate(
    drive: np.ndarray,
    ar: np.ndarray,
    ma: np.ndarray,
    eps_ext: np.ndarray,
    y_ext: np.ndarray,
    pre: int,
) -> None:
    """Generate y_t = drive_t + sum_i ar[i] @ y_{t-1-i} + sum_j ma[j] @ eps_{t-1-j}.

    ``y_ext`` and ``eps_ext`` carry ``pre`` presample rows (zeros or a caller
    supplied initial state); generated rows are written from index ``pre`` on.
    ``drive`` already contains intercept, exogenous terms and the shock eps_t.
    """
    T, m = drive.shape
    p = ar.shape[0]
    q = ma.shape[0]
    for t in range(T):
        a = t + pre
        for i in range(m):
            acc = drive[t, i]
            for l in range(p):
                for k in range(m):
                    acc += ar[l, i, k] * y_ext[a - 1 - l, k]
            for l in range(q):
                for k in range(m):
                    acc += ma[l, i, k] * eps_ext[a - 1 - l, k]
            y_ext[a, i] = acc
