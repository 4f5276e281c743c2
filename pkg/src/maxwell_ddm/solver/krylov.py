"""Restarted, right-preconditioned GMRES."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .sparse import storage_bytes


@dataclass(frozen=True)
class GmresConfig:
    rel_tol: float = 1e-8
    restart: int = 50
    max_iterations: int = 1000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.restart < 1:
            raise ValueError("restart must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SolveReport:
    """Outcome of one iterative solve.

    ``residual_history`` holds relative residuals: the true residual at the
    start of every restart cycle, the Arnoldi estimates within a cycle, and
    the true residual of the returned iterate as the final entry.
    """

    iterations: int = 0
    converged: bool = False
    residual_history: list[float] = field(default_factory=list)
    walltime: float = 0.0
    factor_nnz: int = 0
    peak_bytes_estimate: int = 0
    cycle_starts: list[int] = field(default_factory=list)
    note: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _as_operator(op):
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec") and not hasattr(op, "dot"):
        return op.matvec
    return lambda v: op @ v


def gmres(op, b: np.ndarray, precond=None, cfg: GmresConfig | None = None,
          x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``op x = b`` by GMRES(m) with right preconditioning.

    ``op`` is a matrix, a ``LinearOperator`` or a callable. ``precond`` is
    anything with an ``apply`` method (or None). Preconditioned directions
    are stored explicitly, so a preconditioner that varies between calls
    (inner iterative solves) is handled in the flexible sense.
    Convergence is judged on the true residual ``|b - op x| / |b|``.
    """
    cfg = cfg or GmresConfig()
    t0 = time.perf_counter()
    A = _as_operator(op)
    P = (lambda v: v) if precond is None else precond.apply
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    report = SolveReport()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x[:] = 0.0
        report.converged = True
        report.residual_history = [0.0]
        report.walltime = time.perf_counter() - t0
        return x, report

    m = cfg.restart
    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    report.residual_history.append(beta / bnorm)
    V = np.empty((m + 1, n))
    Z = np.empty((m, n))
    H = np.zeros((m + 1, m))
    total = 0
    best_x, best_res = x.copy(), beta / bnorm

    while beta / bnorm > cfg.rel_tol and total < cfg.max_iterations:
        report.cycle_starts.append(len(report.residual_history) - 1)
        V[0] = r / beta
        H[:] = 0.0
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j = 0
        while j < m and total < cfg.max_iterations:
            Z[j] = P(V[j])
            w = A(Z[j])
            # classical Gram-Schmidt, applied twice
            h = V[: j + 1] @ w
            w = w - h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w = w - h2 @ V[: j + 1]
            H[: j + 1, j] = h + h2
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            breakdown = H[j + 1, j] <= 1e-14 * max(denom, 1e-300)
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j += 1
            total += 1
            est = abs(g[j]) / bnorm
            report.residual_history.append(est)
            if est <= cfg.rel_tol or breakdown:
                break
        zero = np.flatnonzero(np.diag(H[:j, :j]) == 0.0)
        if len(zero):
            # the preconditioner returned a null direction; keep the columns before it
            j = int(zero[0])
            report.note = "null preconditioned direction, stopped"
            if j == 0:
                break
        y = sla.solve_triangular(H[:j, :j], g[:j], check_finite=False)
        x = x + y @ Z[:j]
        r = b - A(x)
        beta = np.linalg.norm(r)
        if not np.isfinite(beta):
            report.note = "non-finite residual, stopped"
            break
        if report.note:
            report.residual_history.append(beta / bnorm)
            if beta / bnorm < best_res:
                best_x, best_res = x.copy(), beta / bnorm
            break
        report.residual_history.append(beta / bnorm)
        if beta / bnorm < best_res:
            best_x, best_res = x.copy(), beta / bnorm
        elif beta / bnorm > best_res:
            # an unstable preconditioner can make a cycle lose ground
            x, r = best_x.copy(), b - A(best_x)
            beta = np.linalg.norm(r)

    if report.residual_history[-1] != best_res:
        x = best_x
        report.residual_history.append(best_res)

    report.iterations = total
    report.converged = bool(report.residual_history[-1] <= cfg.rel_tol)
    report.walltime = time.perf_counter() - t0
    if precond is not None:
        report.factor_nnz = getattr(precond, "factor_nnz", 0)
    fac_bytes = storage_bytes(report.factor_nnz, n) if report.factor_nnz else 0
    report.peak_bytes_estimate = fac_bytes + 8 * n * (2 * m + 1)
    return x, report
