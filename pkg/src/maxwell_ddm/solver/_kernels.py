"""Compiled CSR kernels for incomplete factorizations and triangular sweeps."""
import numpy as np
from numba import njit


@njit(cache=True)
def ilu0_inplace(indptr, indices, data, diag_pos, eps):
    """Zero-fill ILU of a CSR matrix with sorted columns, overwriting ``data``.

    Strict lower part holds L (unit diagonal implied), the rest holds U.
    Pivots smaller than ``eps`` times the row scale are replaced by a
    sign-preserving shift; the number of shifts is returned.
    """
    n = len(indptr) - 1
    marker = -np.ones(n, dtype=np.int64)
    shifts = 0
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        scale = 0.0
        for p in range(start, end):
            marker[indices[p]] = p
            scale = max(scale, abs(data[p]))
        for p in range(start, end):
            k = indices[p]
            if k >= i:
                break
            data[p] /= data[diag_pos[k]]
            lik = data[p]
            for q in range(diag_pos[k] + 1, indptr[k + 1]):
                m = marker[indices[q]]
                if m >= 0:
                    data[m] -= lik * data[q]
        d = data[diag_pos[i]]
        tiny = eps * (scale if scale > 0.0 else 1.0)
        if abs(d) < tiny:
            data[diag_pos[i]] = tiny if d >= 0.0 else -tiny
            shifts += 1
        for p in range(start, end):
            marker[indices[p]] = -1
    return shifts


@njit(cache=True)
def lower_solve(indptr, indices, data, diag_pos, b, unit, omega):
    """Solve ``(D/omega + L) x = b`` or ``(I + L) x = b`` when ``unit``."""
    n = len(b)
    x = np.empty(n)
    for i in range(n):
        s = b[i]
        for p in range(indptr[i], diag_pos[i]):
            s -= data[p] * x[indices[p]]
        x[i] = s if unit else s * omega / data[diag_pos[i]]
    return x


@njit(cache=True)
def upper_solve(indptr, indices, data, diag_pos, b, omega):
    """Solve ``(D/omega + U) x = b`` (``omega = 1`` gives the plain U solve)."""
    n = len(b)
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for p in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[p] * x[indices[p]]
        x[i] = s * omega / data[diag_pos[i]]
    return x
