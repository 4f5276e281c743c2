"""Preconditioners for the real 2x2 block system ``[[K, -B], [B, K]]``.

All of them expose ``apply(r)``, ``name``, ``factor_nnz`` (stored factor
entries, the memory proxy) and ``setup_time``.
"""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .krylov import GmresConfig, gmres
from .sparse import SparseLU, as_csr, diagonal_positions, with_diagonal

__all__ = [
    "Preconditioner",
    "IdentityPreconditioner",
    "Ilu0",
    "SsorSweep",
    "SchurComplement",
    "BlockDiagonal",
    "PreconditionerFailure",
    "make_ilu0",
    "make_ssor",
    "make_schur",
    "make_block_diag",
    "make_preconditioner",
    "PRECONDITIONERS",
]


class PreconditionerFailure(RuntimeError):
    pass


class Preconditioner:
    name = "base"
    factor_nnz = 0
    setup_time = 0.0
    note = ""

    def apply(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, r):
        return self.apply(r)


class IdentityPreconditioner(Preconditioner):
    name = "none"

    def apply(self, r):
        return np.array(r, dtype=float)


class Ilu0(Preconditioner):
    """Zero fill-in incomplete LU on the pattern of the given matrix."""

    name = "ilu0"

    def __init__(self, m, pivot_eps: float = 1e-12):
        t0 = time.perf_counter()
        f = with_diagonal(m).copy()
        if f.shape[0] != f.shape[1]:
            raise ValueError("ILU needs a square matrix")
        self._indptr = f.indptr.astype(np.int64)
        self._indices = f.indices.astype(np.int64)
        self._diag = diagonal_positions(f)
        self._data = f.data.astype(float).copy()
        self.shifts = int(_kernels.ilu0_inplace(self._indptr, self._indices, self._data,
                                                self._diag, pivot_eps))
        self.factor_nnz = int(f.nnz)
        if self.shifts:
            self.note = f"{self.shifts} pivot(s) shifted"
        self.setup_time = time.perf_counter() - t0

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        y = _kernels.lower_solve(self._indptr, self._indices, self._data, self._diag,
                                 r, True, 1.0)
        return _kernels.upper_solve(self._indptr, self._indices, self._data, self._diag,
                                    y, 1.0)


class SsorSweep(Preconditioner):
    """One symmetric SOR sweep, ``M = (D/w + L) (D/w)^{-1} (D/w + U) * w/(2-w)``."""

    name = "ssor"

    def __init__(self, m, relaxation: float = 1.0):
        if not 0.0 < relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        t0 = time.perf_counter()
        m = with_diagonal(m)
        self._indptr = m.indptr.astype(np.int64)
        self._indices = m.indices.astype(np.int64)
        self._data = m.data.astype(float)
        self._diag = diagonal_positions(m)
        d = self._data[self._diag]
        if np.any(d == 0.0):
            raise ValueError(f"zero diagonal entry in row {int(np.flatnonzero(d == 0)[0])}")
        self._d = d
        self.omega = relaxation
        self.factor_nnz = 0
        self.setup_time = time.perf_counter() - t0

    def apply(self, r):
        w = self.omega
        r = np.asarray(r, dtype=float)
        y = _kernels.lower_solve(self._indptr, self._indices, self._data, self._diag,
                                 r, False, w)
        y = (2.0 - w) / w * (self._d / w) * y
        return _kernels.upper_solve(self._indptr, self._indices, self._data, self._diag,
                                    y, w)


class BlockDiagonal(Preconditioner):
    """``diag(K, K)^{-1}`` from one sparse LU of ``K``, reused for every apply."""

    name = "block_diag"

    def __init__(self, K):
        t0 = time.perf_counter()
        self.lu = SparseLU(as_csr(K))
        self.n = self.lu.n
        self.factor_nnz = self.lu.factor_nnz
        self.setup_time = time.perf_counter() - t0

    def apply(self, r):
        n = self.n
        r = np.asarray(r, dtype=float)
        return np.concatenate([self.lu.solve(r[:n]), self.lu.solve(r[n:])])


class SchurComplement(Preconditioner):
    """Block lower-triangular elimination with approximate inner solves.

    ``z1 = K~^{-1} r1``, ``z2 = S~^{-1} (r2 - B z1)`` where
    ``S~ = K + B K~^{-1} B`` acts matrix-free. ``K~^{-1}`` is an ILU0
    preconditioned GMRES to ``inner.rel_tol``; the ``S~`` system is solved
    by GMRES with the same ILU0 of ``K`` as preconditioner. Not a fixed linear map,
    so it must be paired with the flexible outer GMRES of this package.
    """

    name = "schur"

    def __init__(self, K, B, inner: GmresConfig | None = None,
                 schur_inner: GmresConfig | None = None):
        if K.shape != B.shape:
            raise ValueError("K and B must have the same shape")
        t0 = time.perf_counter()
        self.K = as_csr(K)
        self.B = as_csr(B)
        self.n = self.K.shape[0]
        # capped budgets keep one apply bounded when ILU0 is a poor K~^{-1}
        self.inner = inner or GmresConfig(rel_tol=1e-2, restart=20, max_iterations=20)
        self.schur_inner = schur_inner or GmresConfig(rel_tol=1e-2, restart=10, max_iterations=10)
        self.ilu = Ilu0(self.K)
        self.factor_nnz = self.ilu.factor_nnz
        self.decoupled = self.B.nnz == 0 or not np.any(self.B.data)
        self.inner_iterations = 0
        self.setup_time = time.perf_counter() - t0

    def _solve_K(self, r):
        if not np.any(r):
            return np.zeros_like(r)
        x, rep = gmres(self.K, r, self.ilu, self.inner)
        self.inner_iterations += rep.iterations
        if not np.all(np.isfinite(x)) or not np.any(x):
            raise PreconditionerFailure("inner K solve broke down")
        return x

    def _schur_matvec(self, v):
        return self.K @ v + self.B @ self._solve_K(self.B @ v)

    def apply(self, r):
        n = self.n
        r = np.asarray(r, dtype=float)
        z1 = self._solve_K(r[:n])
        r2 = r[n:] - self.B @ z1
        if self.decoupled:
            z2 = self._solve_K(r2)
        elif not np.any(r2):
            z2 = np.zeros(n)
        else:
            z2, rep = gmres(self._schur_matvec, r2, self.ilu, self.schur_inner)
            self.inner_iterations += rep.iterations
            if not np.all(np.isfinite(z2)) or not np.any(z2):
                raise PreconditionerFailure("inner Schur solve broke down")
        return np.concatenate([z1, z2])


def make_ilu0(m) -> Ilu0:
    return Ilu0(m)


def make_ssor(m, relaxation: float = 1.0) -> SsorSweep:
    return SsorSweep(m, relaxation)


def make_schur(K, B, inner: GmresConfig | None = None) -> SchurComplement:
    return SchurComplement(K, B, inner)


def make_block_diag(K) -> BlockDiagonal:
    return BlockDiagonal(K)


PRECONDITIONERS = ("none", "ilu0", "ssor", "schur", "block_diag")


def make_preconditioner(name: str, K, B, relaxation: float = 1.0) -> Preconditioner:
    """Build a named preconditioner for the block operator ``[[K, -B], [B, K]]``."""
    if name == "none":
        return IdentityPreconditioner()
    if name == "block_diag":
        return BlockDiagonal(K)
    if name == "schur":
        return SchurComplement(K, B)
    full = sp.bmat([[K, -B], [B, K]], format="csr")
    if name == "ilu0":
        return Ilu0(full)
    if name == "ssor":
        return SsorSweep(full, relaxation)
    raise ValueError(f"unknown preconditioner {name!r}; choose from {PRECONDITIONERS}")
