"""Non-overlapping domain decomposition with impedance transmission conditions.

Interface data are kept as dual vectors: for an interface edge ``e`` the
entry is ``<g, phi_e>`` with the global edge basis function. Key ``(i, j)``
holds ``g_ji``, the data produced by subdomain ``i`` and consumed by ``j``.

Subdomain ``i`` solves ``(K_i + i B_i) E_i = f_i - sum_j <g_ij, phi>`` where
``B_i`` carries the impedance weight ``kappa * omega`` on its absorbing and
port edges and on every interface edge. After the solve the outgoing data
are ``g_ji = -g_ij - 2 i kappa omega <gamma_T E_i, phi>``.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import (BlockSystem, EdgeSpace, MaterialMap, PlaneWave, build_block_system,
                  from_real, to_real)
from .mesh import GAMMA_INC, GAMMA_INFTY, Partition, StructuredMesh
from .solver import BlockDiagonal, GmresConfig, SolveReport, SparseLU, gmres

__all__ = [
    "DdmConfig",
    "SubdomainProblem",
    "InterfaceState",
    "SubdomainSolveError",
    "build_subproblems",
    "initial_solve_and_traces",
    "local_solve",
    "update_traces",
    "apply_interface_operator",
    "run_ddm",
    "DdmResult",
    "stitch",
    "write_traces",
    "solve_direct",
]


class SubdomainSolveError(RuntimeError):
    def __init__(self, subdomain: int, residual: float):
        super().__init__(f"inner solve on subdomain {subdomain} stalled at residual {residual:.3e}")
        self.subdomain = subdomain
        self.residual = residual


@dataclass(frozen=True)
class DdmConfig:
    outer_solver: str = "gmres"          # "gmres" (interface GMRES) or "jacobi"
    tol: float = 1e-6
    max_outer: int = 200
    inner: str = "direct"                # "direct" or "gmres"
    inner_gmres: GmresConfig = field(default_factory=GmresConfig)
    outer_restart: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.outer_solver not in ("gmres", "jacobi"):
            raise ValueError(f"unknown outer solver {self.outer_solver!r}")
        if self.inner not in ("direct", "gmres"):
            raise ValueError(f"unknown inner strategy {self.inner!r}")
        if not self.tol > 0 or self.max_outer < 1 or self.workers < 1:
            raise ValueError("tol, max_outer and workers must be positive")


class SubdomainProblem:
    """Local Robin problem on one subdomain, with its reusable solver."""

    def __init__(self, sub_id: int, space: EdgeSpace, mat: MaterialMap, omega: float,
                 interfaces: dict[int, np.ndarray], inc: PlaneWave | None,
                 cfg: DdmConfig):
        self.id = sub_id
        self.space = space
        self.omega = omega
        self.weight = mat.kappa * omega
        self.cfg = cfg
        self.neighbors = sorted(interfaces)
        self.interface_edges = {j: np.asarray(e, np.int64) for j, e in interfaces.items()}
        self.interface_local = {j: space.local_index(e) for j, e in self.interface_edges.items()}
        all_iface = (np.concatenate(list(self.interface_edges.values()))
                     if interfaces else np.zeros(0, np.int64))
        robin = (np.sort(all_iface), self.weight) if len(all_iface) else None
        self.system: BlockSystem = build_block_system(
            space, mat, omega, inc,
            port_edges=space.edges_with_tag(GAMMA_INC),
            absorbing_edges=space.edges_with_tag(GAMMA_INFTY),
            interface_robin=robin)
        # tangential mass of the interface edges: diagonal 1/|e|
        self.trace_mass = {j: 1.0 / space.mesh.edge_length(e)
                           for j, e in self.interface_edges.items()}
        if cfg.inner == "direct":
            self.lu = SparseLU(self.system.operator())
            self.precond = None
        else:
            self.lu = None
            self.precond = BlockDiagonal(self.system.K)
            self._op = self.system.operator()
        self.inner_iterations: list[int] = []

    @property
    def n(self) -> int:
        return self.space.n

    def load(self, incoming: dict[int, np.ndarray], with_incident: bool) -> np.ndarray:
        f = self.system.rhs.copy() if with_incident else np.zeros(self.n, complex)
        for j, g in incoming.items():
            f[self.interface_local[j]] -= g
        return f

    def solve(self, f: np.ndarray) -> np.ndarray:
        b = to_real(f)
        if self.lu is not None:
            return from_real(self.lu.solve(b))
        x, rep = gmres(self._op, b, self.precond, self.cfg.inner_gmres)
        self.inner_iterations.append(rep.iterations)
        if not rep.converged:
            raise SubdomainSolveError(self.id, rep.final_residual)
        return from_real(x)

    def neumann_trace(self, E: np.ndarray, j: int) -> np.ndarray:
        """``<N(E), phi_e>`` on the interface with ``j`` from the local residual."""
        rows = self.interface_local[j]
        return -(self.system.K @ E)[rows]

    def impedance_trace(self, E: np.ndarray, j: int) -> np.ndarray:
        """``<gamma_T E, phi_e>`` on the interface with ``j``."""
        return self.trace_mass[j] * E[self.interface_local[j]]


@dataclass
class InterfaceState:
    """Traces for every ordered neighbour pair; key ``(i, j)`` holds ``g_ji``."""

    traces: dict[tuple[int, int], np.ndarray]
    k: int = 0
    residuals: list[float] = field(default_factory=list)

    def keys(self) -> list[tuple[int, int]]:
        return sorted(self.traces)

    def stacked(self) -> np.ndarray:
        if not self.traces:
            return np.zeros(0, complex)
        return np.concatenate([self.traces[key] for key in self.keys()])

    def incoming(self, i: int) -> dict[int, np.ndarray]:
        """Data consumed by subdomain ``i``, keyed by producer."""
        return {p: g for (p, c), g in self.traces.items() if c == i}

    @classmethod
    def zeros_like(cls, problems: list[SubdomainProblem]) -> "InterfaceState":
        traces = {}
        for p in problems:
            for j in p.neighbors:
                traces[(p.id, j)] = np.zeros(len(p.interface_edges[j]), complex)
        return cls(traces)

    def from_stacked(self, v: np.ndarray) -> "InterfaceState":
        out, pos = {}, 0
        for key in self.keys():
            m = len(self.traces[key])
            out[key] = v[pos:pos + m].copy()
            pos += m
        return InterfaceState(out, self.k)


def build_subproblems(mesh: StructuredMesh, partition: Partition, mat: MaterialMap,
                      omega: float, cfg: DdmConfig | None = None,
                      inc: PlaneWave | None = None) -> list[SubdomainProblem]:
    """One local Robin problem per subdomain; factorizations are built once here."""
    cfg = cfg or DdmConfig()
    problems = []
    for d in range(1, partition.n_dom + 1):
        cells = partition.cells_of[d]
        if len(cells) == 0:
            raise ValueError(f"subdomain {d} is empty")
        space = EdgeSpace(mesh, cells)
        ifaces = {j: np.asarray(partition.interface_edges(d, j), np.int64)
                  for j in partition.neighbors(d)}
        problems.append(SubdomainProblem(d, space, mat, omega, ifaces, inc, cfg))
    return problems


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def local_solve(problem: SubdomainProblem, incoming: dict[int, np.ndarray],
                with_incident: bool = True) -> np.ndarray:
    """Local field for the given incoming traces (keyed by producing neighbour)."""
    return problem.solve(problem.load(incoming, with_incident))


def update_traces(problem: SubdomainProblem, E: np.ndarray,
                  incoming: dict[int, np.ndarray],
                  form: str = "algebraic") -> dict[tuple[int, int], np.ndarray]:
    """Outgoing traces ``g_ji`` of subdomain ``i`` after its local solve.

    ``form="algebraic"`` uses ``-g_ij - 2 i kappa omega <gamma_T E, phi>``;
    ``form="variational"`` recomputes ``-<N(E), phi> - i kappa omega <gamma_T E, phi>``
    from the local residual.
    """
    out = {}
    kw = problem.weight
    for j in problem.neighbors:
        imp = problem.impedance_trace(E, j)
        if form == "algebraic":
            g_in = incoming.get(j)
            g_in = np.zeros_like(imp, dtype=complex) if g_in is None else g_in
            out[(problem.id, j)] = -g_in - 2j * kw * imp
        elif form == "variational":
            out[(problem.id, j)] = -problem.neumann_trace(E, j) - 1j * kw * imp
        else:
            raise ValueError(f"unknown trace form {form!r}")
    return out


def _round(problems, state: InterfaceState, with_incident: bool, workers: int):
    """One Jacobi round: all local solves against the same trace snapshot."""
    def task(p):
        inc = state.incoming(p.id)
        E = local_solve(p, inc, with_incident)
        return E, update_traces(p, E, inc)

    results = _map(task, problems, workers)
    fields = [E for E, _ in results]
    traces = {}
    for _, t in results:
        traces.update(t)
    return fields, InterfaceState(traces, state.k + 1)


def initial_solve_and_traces(problems: list[SubdomainProblem], workers: int = 1):
    """Solve every subdomain with zero interface data; return fields and the state ``b``."""
    zero = InterfaceState.zeros_like(problems)
    fields, state = _round(problems, zero, True, workers)
    state.k = 0
    return fields, state


def apply_interface_operator(problems: list[SubdomainProblem], g: np.ndarray,
                             template: InterfaceState | None = None,
                             workers: int = 1) -> np.ndarray:
    """``A g``: one round of local solves without incident field, complex stacked vector."""
    template = template or InterfaceState.zeros_like(problems)
    _, out = _round(problems, template.from_stacked(np.asarray(g, complex)), False, workers)
    return out.stacked()


def stitch(problems: list[SubdomainProblem], fields: list[np.ndarray], n_global: int) -> np.ndarray:
    """Global edge field; interface edges take the mean of both sides."""
    total = np.zeros(n_global, complex)
    count = np.zeros(n_global)
    for p, E in zip(problems, fields):
        total[p.space.dofs] += E
        count[p.space.dofs] += 1
    return total / np.maximum(count, 1)


@dataclass
class DdmResult:
    field: np.ndarray
    report: SolveReport
    inner_averages: dict[int, float]
    state: InterfaceState
    fields: list[np.ndarray]


def run_ddm(problems: list[SubdomainProblem], cfg: DdmConfig | None = None) -> DdmResult:
    """Solve ``(1 - A) g = b`` by Jacobi sweeps or interface GMRES and stitch the field."""
    cfg = cfg or DdmConfig()
    t0 = time.perf_counter()
    workers = cfg.workers
    n_global = problems[0].space.mesh.n_edges
    fields, b_state = initial_solve_and_traces(problems, workers)
    b = b_state.stacked()
    bnorm = np.linalg.norm(b)
    report = SolveReport()

    if len(b) == 0 or bnorm == 0.0:
        report.iterations = 1
        report.converged = True
        report.residual_history = [0.0]
        state = b_state
    elif cfg.outer_solver == "jacobi":
        state = b_state
        report.residual_history.append(1.0)
        report.iterations = 1
        while True:
            fields, new = _round(problems, state, True, workers)
            res = np.linalg.norm(new.stacked() - state.stacked()) / bnorm
            report.residual_history.append(res)
            state = new
            if res < cfg.tol or report.iterations >= cfg.max_outer:
                break
            report.iterations += 1
        report.converged = report.residual_history[-1] < cfg.tol
    else:
        def op(v):
            g = from_real(v)
            return to_real(g - apply_interface_operator(problems, g, b_state, workers))

        gcfg = GmresConfig(rel_tol=cfg.tol, restart=cfg.outer_restart,
                           max_iterations=cfg.max_outer)
        x, report = gmres(op, to_real(b), None, gcfg)
        g = b_state.from_stacked(from_real(x))
        fields, _ = _round(problems, g, True, workers)
        state = g

    state.residuals = list(report.residual_history)
    state.k = report.iterations
    report.walltime = time.perf_counter() - t0
    report.factor_nnz = sum(p.lu.factor_nnz if p.lu is not None else p.precond.factor_nnz
                            for p in problems)
    averages = {p.id: (float(np.mean(p.inner_iterations)) if p.inner_iterations else 0.0)
                for p in problems}
    return DdmResult(stitch(problems, fields, n_global), report, averages, state, fields)


def solve_direct(system: BlockSystem) -> np.ndarray:
    """Single-domain reference solve through the sparse LU of the block operator."""
    return from_real(SparseLU(system.operator()).solve(system.rhs_real))


def write_traces(state: InterfaceState, problems: list[SubdomainProblem], path) -> None:
    """Dump lines ``i j edge re im`` (data produced by ``i`` for ``j``)."""
    by_id = {p.id: p for p in problems}
    with Path(path).open("w") as fh:
        for (i, j) in state.keys():
            edges = by_id[i].interface_edges[j]
            for e, v in zip(edges, state.traces[(i, j)]):
                fh.write(f"{i} {j} {e} {float(v.real)!r} {float(v.imag)!r}\n")
