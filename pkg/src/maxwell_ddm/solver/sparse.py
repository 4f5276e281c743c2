"""CSR helpers and the reusable sparse direct factorization."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def as_csr(m) -> sp.csr_matrix:
    """Canonical CSR: float64, duplicates summed, columns sorted per row."""
    m = sp.csr_matrix(m, dtype=float)
    m.sum_duplicates()
    m.sort_indices()
    return m


def spmv(m, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if m.shape[1] != x.shape[0]:
        raise ValueError(f"cannot multiply {m.shape} matrix by vector of length {x.shape[0]}")
    return m @ x


def with_diagonal(m) -> sp.csr_matrix:
    """Copy of ``m`` whose pattern contains every diagonal entry."""
    m = as_csr(m)
    missing = np.ones(m.shape[0], dtype=bool)
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    missing[rows[rows == m.indices]] = False
    if missing.any():
        coo = m.tocoo()
        idx = np.flatnonzero(missing)
        rows = np.concatenate([coo.row, idx])
        cols = np.concatenate([coo.col, idx])
        vals = np.concatenate([coo.data, np.zeros(len(idx))])
        # coo -> csr keeps explicit zeros in the pattern
        m = sp.coo_matrix((vals, (rows, cols)), shape=m.shape).tocsr()
        m.sum_duplicates()
        m.sort_indices()
    return m


def diagonal_positions(m: sp.csr_matrix) -> np.ndarray:
    n = m.shape[0]
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        k = np.searchsorted(m.indices[lo:hi], i)
        if k == hi - lo or m.indices[lo + k] != i:
            raise ValueError(f"row {i} has no diagonal entry in its pattern")
        pos[i] = lo + k
    return pos


def storage_bytes(nnz: int, n_rows: int) -> int:
    """Compressed-storage estimate: 8-byte values, 4-byte indices and offsets."""
    return 8 * nnz + 4 * nnz + 4 * (n_rows + 1)


class SparseLU:
    """Sparse LU (SuperLU, COLAMD ordering) kept for repeated solves."""

    def __init__(self, m):
        m = sp.csc_matrix(m, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("LU needs a square matrix")
        try:
            self._lu = spla.splu(m, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        self.n = m.shape[0]
        self.factor_nnz = int(self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    @property
    def nbytes(self) -> int:
        return storage_bytes(self.factor_nnz, self.n)


def sparse_lu(m) -> SparseLU:
    return SparseLU(m)
