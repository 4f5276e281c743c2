"""Lowest-order Nedelec edge elements on quadrilaterals.

Each edge carries one degree of freedom, the tangential moment
``int_e u . tau ds`` along the global edge tangent ``tau`` (lower to higher
vertex index). Basis functions are pulled back with the covariant Piola map
``phi = J^{-T} phi_hat`` and ``curl phi = curl_hat phi_hat / det J``.

Complex fields are plain ``complex128`` arrays; the solver layer works on
the stacked real form ``[re; im]`` (see :func:`to_real` / :func:`from_real`).

Sign conventions for the time-harmonic problem (``exp(i omega t)``):

* bilinear form ``K = A - omega^2 M_eps`` with ``M_eps`` weighted by ``n^2``,
* impedance blocks ``B = kappa * omega * (tangential edge mass)`` so that the
  complex system is ``(K + iB) E = rhs``,
* a Robin condition ``N(E) - i kappa omega gamma_T(E) = h`` with Neumann trace
  ``N(E) = mu^{-1} n x curl E`` contributes the load ``-<h, phi>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .mesh import INTERIOR, GAMMA_INC, GAMMA_INFTY, StructuredMesh

__all__ = [
    "ref_basis",
    "EdgeSpace",
    "MaterialMap",
    "PlaneWave",
    "BlockSystem",
    "element_matrices",
    "assemble_A",
    "assemble_M",
    "assemble_B",
    "assemble_s",
    "robin_load",
    "build_block_system",
    "interpolate",
    "evaluate_field",
    "l2_error",
    "discrete_gradient",
    "to_real",
    "from_real",
    "write_matrix",
]

# reference edges: bottom, right, top, left; tangents along +x / +y
_REF_CURL = np.array([1.0, 1.0, -1.0, -1.0])
# local vertex pairs (start, end) of each reference edge, tangent direction
_EDGE_VERTS = np.array([[0, 1], [1, 2], [3, 2], [0, 3]])
# counter-clockwise induced tangent relative to the reference tangent
CCW_SIGN = np.array([1, 1, -1, -1])


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def ref_basis(k: int, point) -> tuple[np.ndarray, float]:
    """Value and scalar curl of reference edge function ``k`` at ``point`` in [0,1]^2."""
    if k not in (0, 1, 2, 3):
        raise IndexError(f"local edge index {k} out of range 0..3")
    xi, eta = point
    val = _ref_values(np.array([xi]), np.array([eta]))[0, k]
    return val, _REF_CURL[k]


def _ref_values(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Reference basis values, shape (npts, 4, 2)."""
    z = np.zeros_like(xi)
    return np.stack([
        np.stack([1.0 - eta, z], axis=-1),
        np.stack([z, xi], axis=-1),
        np.stack([eta, z], axis=-1),
        np.stack([z, 1.0 - xi], axis=-1),
    ], axis=1)


def _jacobians(X: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Bilinear-map Jacobians for cells ``X`` (nc,4,2) at points, shape (nc,npts,2,2)."""
    dxi = np.stack([-(1 - eta), (1 - eta), eta, -eta], axis=-1)      # (npts,4)
    deta = np.stack([-(1 - xi), -xi, xi, (1 - xi)], axis=-1)
    Jx = np.einsum("qv,cvd->cqd", dxi, X)
    Je = np.einsum("qv,cvd->cqd", deta, X)
    return np.stack([Jx, Je], axis=-1)                                 # columns d/dxi, d/deta


def _map_points(X: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1)
    return np.einsum("qv,cvd->cqd", N, X)


def _physical_basis(X, signs, xi, eta):
    """Signed physical basis values (nc,npts,4,2), curls (nc,npts,4) and |det J| (nc,npts)."""
    J = _jacobians(X, xi, eta)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.linalg.inv(J)
    ref = _ref_values(xi, eta)
    vals = np.einsum("cqji,qkj->cqki", Jinv, ref)  # J^{-T} phi_hat
    curls = _REF_CURL[None, None, :] / det[..., None]
    s = signs[:, None, :]
    return vals * s[..., None], curls * s, np.abs(det)


@dataclass
class MaterialMap:
    """Per-cell coefficients; ``eps_r = n**2``."""

    mu_inv: np.ndarray
    eps_r: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        self.mu_inv = np.asarray(self.mu_inv, dtype=float)
        self.eps_r = np.asarray(self.eps_r, dtype=float)
        if np.any(self.mu_inv <= 0):
            raise ValueError("mu_inv must be positive")

    @classmethod
    def from_mesh(cls, mesh: StructuredMesh, kappa: float = 1.0) -> "MaterialMap":
        n = mesh.refractive_index()
        return cls(np.ones(mesh.n_cells), n ** 2, kappa)

    @classmethod
    def uniform(cls, n_cells: int, mu_inv: float = 1.0, eps_r: float = 1.0,
                kappa: float = 1.0) -> "MaterialMap":
        return cls(np.full(n_cells, mu_inv), np.full(n_cells, eps_r), kappa)


class EdgeSpace:
    """Edge-element space over a subset of mesh cells.

    ``dofs[k]`` is the global edge index of local DoF ``k`` (ascending), so the
    space over all cells numbers DoFs exactly like mesh edges.
    """

    def __init__(self, mesh: StructuredMesh, cells: Iterable[int] | None = None):
        self.mesh = mesh
        self.cells = (np.arange(mesh.n_cells) if cells is None
                      else np.asarray(sorted(cells), dtype=np.int64))
        if len(self.cells) == 0:
            raise ValueError("empty cell set")
        global_edges = mesh.cell_edges[self.cells]
        self.dofs = np.unique(global_edges)
        self.cell_dofs = np.searchsorted(self.dofs, global_edges)
        verts = mesh.cells[self.cells]
        a = np.take_along_axis(verts, np.broadcast_to(_EDGE_VERTS[:, 0], verts.shape), 1)
        b = np.take_along_axis(verts, np.broadcast_to(_EDGE_VERTS[:, 1], verts.shape), 1)
        self.cell_signs = np.where(a < b, 1.0, -1.0)
        self._local = {int(e): k for k, e in enumerate(self.dofs)}

    @property
    def n(self) -> int:
        return len(self.dofs)

    def cell_coords(self) -> np.ndarray:
        return self.mesh.vertices[self.mesh.cells[self.cells]]

    def local_index(self, edges: Iterable[int]) -> np.ndarray:
        """Local DoF indices of global edges (KeyError if not in the space)."""
        return np.array([self._local[int(e)] for e in edges], dtype=np.int64)

    def edges_with_tag(self, tag) -> np.ndarray:
        tags = self.mesh.edge_tags
        return np.array([e for e in self.dofs if tags[e] == tag], dtype=np.int64)

    def outer_edges(self) -> np.ndarray:
        """Global edges on the boundary of this cell set."""
        counts = np.bincount(self.cell_dofs.ravel(), minlength=self.n)
        return self.dofs[counts == 1]

    def induced_orientation(self) -> np.ndarray:
        """Sign of the global tangent against each cell's counter-clockwise tangent."""
        return self.cell_signs * CCW_SIGN[None, :]


@dataclass(frozen=True)
class PlaneWave:
    """``E(x) = amplitude * polarization * exp(-i omega n direction . x)``."""

    direction: tuple[float, float] = (1.0, 0.0)
    polarization: tuple[float, float] = (0.0, 1.0)
    amplitude: complex = 1.0
    n: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        p = np.asarray(self.polarization, float)
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(np.linalg.norm(p) - 1) > 1e-12:
            raise ValueError("direction and polarization must be unit vectors")
        if abs(d @ p) > 1e-12:
            raise ValueError("polarization must be orthogonal to direction")

    @classmethod
    def at_angle(cls, theta: float, amplitude: complex = 1.0, n: float = 1.0) -> "PlaneWave":
        c, s = np.cos(theta), np.sin(theta)
        return cls((c, s), (-s, c), amplitude, n)

    def _phase(self, pts, omega):
        d = np.asarray(self.direction)
        return self.amplitude * np.exp(-1j * omega * self.n * (pts @ d))

    def value(self, pts: np.ndarray, omega: float) -> np.ndarray:
        return self._phase(pts, omega)[..., None] * np.asarray(self.polarization)

    def curl(self, pts: np.ndarray, omega: float) -> np.ndarray:
        d, p = self.direction, self.polarization
        return -1j * omega * self.n * (d[0] * p[1] - d[1] * p[0]) * self._phase(pts, omega)


def element_matrices(X: np.ndarray, signs: np.ndarray | None = None, nq: int = 3):
    """Curl-curl and mass element matrices for quads ``X`` of shape (nc,4,2).

    Unweighted; the result is exactly symmetric.
    """
    X = np.asarray(X, float)
    if signs is None:
        signs = np.ones(X.shape[:2])
    g, w = _gauss(nq)
    xi, eta = (a.ravel() for a in np.meshgrid(g, g))
    wq = np.outer(w, w).ravel()
    vals, curls, det = _physical_basis(X, signs, xi, eta)
    dw = det * wq
    Ae = np.einsum("cq,cqk,cql->ckl", dw, curls, curls)
    Me = np.einsum("cq,cqki,cqli->ckl", dw, vals, vals)
    Ae = 0.5 * (Ae + Ae.transpose(0, 2, 1))
    Me = 0.5 * (Me + Me.transpose(0, 2, 1))
    return Ae, Me


def _scatter(space: EdgeSpace, local: np.ndarray) -> sp.csr_matrix:
    rows = np.repeat(space.cell_dofs, 4, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, 4)).ravel()
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n, space.n))
    return m.tocsr()


def _cell_weights(space: EdgeSpace, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, float)
    if values.shape[0] == space.mesh.n_cells:
        return values[space.cells]
    return values


def assemble_A(space: EdgeSpace, mat: MaterialMap) -> sp.csr_matrix:
    """``int mu^{-1} curl phi_u curl phi_v``."""
    Ae, _ = element_matrices(space.cell_coords(), space.cell_signs)
    return _scatter(space, Ae * _cell_weights(space, mat.mu_inv)[:, None, None])


def assemble_M(space: EdgeSpace, mat: MaterialMap) -> sp.csr_matrix:
    """``int eps_r phi_u . phi_v``."""
    _, Me = element_matrices(space.cell_coords(), space.cell_signs)
    return _scatter(space, Me * _cell_weights(space, mat.eps_r)[:, None, None])


def _check_trace_edges(space: EdgeSpace, edges) -> np.ndarray:
    edges = np.asarray(list(edges), dtype=np.int64)
    tags = space.mesh.edge_tags
    bad = [int(e) for e in edges if tags[e] == INTERIOR]
    if bad:
        raise ValueError(f"edges {bad[:5]} are interior, not boundary or interface")
    return edges


def assemble_B(space: EdgeSpace, edges, coeff: float = 1.0) -> sp.csr_matrix:
    """``coeff * int_e gamma_T phi_u . gamma_T phi_v`` over the given edges.

    The lowest-order tangential trace on its own edge is ``1/|e|`` and zero on
    all other edges, so the result is diagonal with entries ``coeff / |e|``.
    """
    edges = _check_trace_edges(space, edges)
    diag = np.zeros(space.n)
    if len(edges):
        diag[space.local_index(edges)] = coeff / space.mesh.edge_length(edges)
    m = sp.diags(diag, format="csr")
    m.eliminate_zeros()
    return m


def _edge_quadrature(space: EdgeSpace, edges: np.ndarray, nq: int):
    mesh = space.mesh
    g, w = _gauss(nq)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    length = np.linalg.norm(b - a, axis=1)
    tau = (b - a) / length[:, None]
    pts = a[:, None, :] + g[None, :, None] * (b - a)[:, None, :]
    return pts, w[None, :] * length[:, None], tau, length


def assemble_s(space: EdgeSpace, inc: PlaneWave, edges, omega: float,
               mat: MaterialMap | None = None, nq: int = 3) -> np.ndarray:
    """``s_u = int gamma_T E_inc . gamma_T phi_u`` on the given edges (complex)."""
    edges = _check_trace_edges(space, edges)
    s = np.zeros(space.n, dtype=complex)
    if len(edges) == 0:
        return s
    pts, wq, tau, length = _edge_quadrature(space, edges, nq)
    et = np.einsum("eqd,ed->eq", inc.value(pts, omega), tau)
    s[space.local_index(edges)] = (wq * et).sum(axis=1) / length
    return s


def _owner_cells(space: EdgeSpace, edges: np.ndarray) -> np.ndarray:
    """Position (within ``space.cells``) of the first cell touching each edge."""
    owner: dict[int, int] = {}
    for c, row in enumerate(space.mesh.cell_edges[space.cells]):
        for e in row:
            owner.setdefault(int(e), c)
    return np.array([owner[int(e)] for e in edges], dtype=np.int64)


def _outward_normals(space: EdgeSpace, edges: np.ndarray, tau: np.ndarray,
                     owner: np.ndarray) -> np.ndarray:
    mesh = space.mesh
    centers = mesh.vertices[mesh.cells[space.cells[owner]]].mean(axis=1)
    mid = 0.5 * (mesh.vertices[mesh.edges[edges, 0]] + mesh.vertices[mesh.edges[edges, 1]])
    n = np.column_stack([tau[:, 1], -tau[:, 0]])
    flip = np.einsum("ed,ed->e", n, mid - centers) < 0
    n[flip] *= -1
    return n


def robin_load(space: EdgeSpace, exact: PlaneWave, edges, omega: float,
               mat: MaterialMap, nq: int = 5) -> np.ndarray:
    """Load ``-<N(E) - i kappa omega gamma_T E, phi>`` of exact Robin data.

    ``N(E) = mu^{-1} n x curl E`` is evaluated from the exact field with
    ``mu^{-1}`` of the cell adjacent to each edge.
    """
    edges = _check_trace_edges(space, edges)
    out = np.zeros(space.n, dtype=complex)
    if len(edges) == 0:
        return out
    pts, wq, tau, length = _edge_quadrature(space, edges, nq)
    owner = _owner_cells(space, edges)
    n = _outward_normals(space, edges, tau, owner)
    mu_inv = _cell_weights(space, mat.mu_inv)[owner]
    c = exact.curl(pts, omega)
    et = np.einsum("eqd,ed->eq", exact.value(pts, omega), tau)
    # tangential component of n x (c z) along tau
    rot = n[:, 1] * tau[:, 0] - n[:, 0] * tau[:, 1]
    h = mu_inv[:, None] * c * rot[:, None] - 1j * mat.kappa * omega * et
    out[space.local_index(edges)] = -(wq * h).sum(axis=1) / length
    return out


@dataclass
class BlockSystem:
    """Real block form ``[[K, -B], [B, K]] [re; im] = [rhs_re; rhs_im]``."""

    K: sp.csr_matrix
    B: sp.csr_matrix
    rhs: np.ndarray
    omega: float

    def __post_init__(self):
        if self.K.shape != self.B.shape or self.K.shape[0] != len(self.rhs):
            raise ValueError("dimension mismatch between K, B and rhs")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def operator(self) -> sp.csr_matrix:
        return sp.bmat([[self.K, -self.B], [self.B, self.K]], format="csr")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        re, im = x[:n], x[n:]
        return np.concatenate([self.K @ re - self.B @ im, self.B @ re + self.K @ im])

    def complex_matrix(self) -> sp.csr_matrix:
        return (self.K + 1j * self.B).tocsr()

    @property
    def rhs_real(self) -> np.ndarray:
        return to_real(self.rhs)


def build_block_system(space: EdgeSpace, mat: MaterialMap, omega: float,
                       inc: PlaneWave | None = None,
                       port_edges=None, absorbing_edges=None,
                       interface_robin=None,
                       boundary_weight: float | None = None) -> BlockSystem:
    """Assemble ``K = A - omega^2 M_eps`` and the impedance blocks.

    ``port_edges`` / ``absorbing_edges`` default to the space's Gamma_inc /
    Gamma_infty edges. The port is an impedance boundary driven by ``inc``
    (load ``2 i kappa omega s``). ``interface_robin`` is an optional
    ``(edges, coeff)`` pair of extra Robin blocks. ``boundary_weight``
    overrides the impedance weight ``kappa * omega``.
    """
    if port_edges is None:
        port_edges = space.edges_with_tag(GAMMA_INC)
    if absorbing_edges is None:
        absorbing_edges = space.edges_with_tag(GAMMA_INFTY)
    weight = mat.kappa * omega if boundary_weight is None else boundary_weight
    A = assemble_A(space, mat)
    K = A if omega == 0 else (A - omega ** 2 * assemble_M(space, mat)).tocsr()
    imp = np.concatenate([np.asarray(port_edges, np.int64),
                          np.asarray(absorbing_edges, np.int64)])
    B = assemble_B(space, imp, weight) if weight != 0 else assemble_B(space, [], 0.0)
    if interface_robin is not None:
        edges, coeff = interface_robin
        B = (B + assemble_B(space, edges, coeff)).tocsr()
    rhs = np.zeros(space.n, dtype=complex)
    if inc is not None and len(port_edges):
        rhs += 2j * mat.kappa * omega * assemble_s(space, inc, port_edges, omega, mat)
    return BlockSystem(K.tocsr(), B.tocsr(), rhs, float(omega))


def interpolate(space: EdgeSpace, field: PlaneWave, omega: float, nq: int = 6) -> np.ndarray:
    """Edge moments ``int_e E . tau ds`` of a plane wave."""
    pts, wq, tau, _ = _edge_quadrature(space, space.dofs, nq)
    et = np.einsum("eqd,ed->eq", field.value(pts, omega), tau)
    return (wq * et).sum(axis=1)


def discrete_gradient(space: EdgeSpace) -> sp.csr_matrix:
    """Edge moments of nodal hat-function gradients, shape (n_dofs, n_vertices)."""
    ends = space.mesh.edges[space.dofs]
    m = len(ends)
    rows = np.repeat(np.arange(m), 2)
    cols = ends.ravel()
    vals = np.tile([-1.0, 1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, space.mesh.n_vertices))


def _cell_field(space: EdgeSpace, coeffs: np.ndarray, xi, eta):
    """Field values (nc,npts,2), physical points and |det J| weights at reference points."""
    X = space.cell_coords()
    vals, _, det = _physical_basis(X, space.cell_signs, xi, eta)
    u = np.asarray(coeffs)[space.cell_dofs]                  # (nc,4)
    E = np.einsum("cqki,ck->cqi", vals, u)
    return E, _map_points(X, xi, eta), det


def l2_error(space: EdgeSpace, coeffs: np.ndarray, exact: PlaneWave | None,
             omega: float = 0.0, nq: int = 5) -> float:
    """Cellwise Gauss-quadrature L2 norm of ``E_h - E_exact`` (exact None means zero)."""
    g, w = _gauss(nq)
    xi, eta = (a.ravel() for a in np.meshgrid(g, g))
    wq = np.outer(w, w).ravel()
    E, pts, det = _cell_field(space, coeffs, xi, eta)
    if exact is not None:
        E = E - exact.value(pts, omega)
    return float(np.sqrt(np.sum(det * wq * np.sum(np.abs(E) ** 2, axis=-1))))


def evaluate_field(space: EdgeSpace, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Reconstruct the field at physical points of an axis-aligned structured mesh."""
    mesh = space.mesh
    if len(space.cells) != mesh.n_cells:
        raise ValueError("evaluation needs a space over the whole mesh")
    points = np.atleast_2d(np.asarray(points, float))
    x0, x1, y0, y1 = mesh.extent
    hx, hy = mesh.h
    sx = (points[:, 0] - x0) / hx
    sy = (points[:, 1] - y0) / hy
    i = np.clip(np.floor(sx).astype(int), 0, mesh.nx - 1)
    j = np.clip(np.floor(sy).astype(int), 0, mesh.ny - 1)
    xi, eta = sx - i, sy - j
    cell = j * mesh.nx + i
    ref = _ref_values(xi, eta)                               # (p,4,2)
    scale = np.array([1.0 / hx, 1.0 / hy])
    signs = space.cell_signs[cell]
    u = np.asarray(coeffs)[space.cell_dofs[cell]] * signs
    return np.einsum("pki,pk->pi", ref * scale, u)


def to_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def from_real(x: np.ndarray) -> np.ndarray:
    n = len(x) // 2
    return x[:n] + 1j * x[n:]


def write_matrix(m, path) -> None:
    """Coordinate text dump ``row col value`` with zero-based indices."""
    coo = sp.coo_matrix(m)
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
