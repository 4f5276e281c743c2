"""Sparse kernels, GMRES and the block-system preconditioners."""
from .sparse import SingularMatrixError, SparseLU, as_csr, sparse_lu, spmv, storage_bytes
from .krylov import GmresConfig, SolveReport, gmres
from .precond import (
    PRECONDITIONERS,
    BlockDiagonal,
    IdentityPreconditioner,
    Ilu0,
    Preconditioner,
    PreconditionerFailure,
    SchurComplement,
    SsorSweep,
    make_block_diag,
    make_ilu0,
    make_preconditioner,
    make_schur,
    make_ssor,
)

__all__ = [
    "SingularMatrixError", "SparseLU", "as_csr", "sparse_lu", "spmv", "storage_bytes",
    "GmresConfig", "SolveReport", "gmres",
    "PRECONDITIONERS", "BlockDiagonal", "IdentityPreconditioner", "Ilu0", "Preconditioner",
    "PreconditionerFailure", "SchurComplement", "SsorSweep", "make_block_diag", "make_ilu0",
    "make_preconditioner", "make_schur", "make_ssor",
]
