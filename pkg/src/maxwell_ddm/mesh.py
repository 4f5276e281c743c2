"""Structured quadrilateral meshes, boundary tags and grid partitions.

Numbering conventions
---------------------
Vertices are numbered row by row, ``v = j * (nx + 1) + i``.

Horizontal edges come first, ``e = j * nx + i`` joins vertex ``(i, j)`` to
``(i + 1, j)``. Vertical edges follow, ``e = nx * (ny + 1) + j * (nx + 1) + i``
joins ``(i, j)`` to ``(i, j + 1)``. Every edge is oriented from its lower to
its higher vertex index, i.e. along +x or +y.

Cells are numbered ``c = j * nx + i`` with counter-clockwise vertices
``(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)`` and local edges
bottom, right, top, left.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "TagKind",
    "BoundaryTag",
    "INTERIOR",
    "GAMMA_INC",
    "GAMMA_INFTY",
    "interface_tag",
    "GeometrySpec",
    "StructuredMesh",
    "Partition",
    "build_rect_mesh",
    "partition_grid",
    "boundary_edges",
    "write_mesh",
    "CLADDING",
    "CORE",
]

CLADDING = 0
CORE = 1


class TagKind(Enum):
    INTERIOR = "interior"
    GAMMA_INC = "gamma_inc"
    GAMMA_INFTY = "gamma_infty"
    INTERFACE = "interface"


class BoundaryTag(NamedTuple):
    kind: TagKind
    pair: tuple[int, int] | None = None

    def __str__(self) -> str:
        if self.kind is TagKind.INTERFACE:
            return f"interface_{self.pair[0]}_{self.pair[1]}"
        return self.kind.value


INTERIOR = BoundaryTag(TagKind.INTERIOR)
GAMMA_INC = BoundaryTag(TagKind.GAMMA_INC)
GAMMA_INFTY = BoundaryTag(TagKind.GAMMA_INFTY)


def interface_tag(i: int, j: int) -> BoundaryTag:
    """Tag for the interface between subdomains ``i`` and ``j`` (order-free)."""
    if i == j:
        raise ValueError("an interface needs two distinct subdomains")
    return BoundaryTag(TagKind.INTERFACE, (min(i, j), max(i, j)))


@dataclass(frozen=True)
class GeometrySpec:
    """Material layout on the rectangle.

    ``kind`` is one of ``"plain"``, ``"block"`` or ``"ybranch"``. Lengths are
    fractions of the domain height (block, ybranch) or width (``split_x``).
    """

    kind: str = "plain"
    n_core: float = 1.516
    n_cladding: float = 1.0
    core_half_width: float = 0.25
    split_x: float = 0.35
    arm_offset: float = 0.25

    def __post_init__(self):
        if self.kind not in ("plain", "block", "ybranch"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if not self.n_core >= self.n_cladding >= 1.0:
            raise ValueError("expected n_core >= n_cladding >= 1")

    @classmethod
    def plain(cls) -> "GeometrySpec":
        return cls("plain", n_core=1.0, n_cladding=1.0)

    @classmethod
    def block(cls, core_half_width: float = 0.25, n_core: float = 1.516,
              n_cladding: float = 1.0) -> "GeometrySpec":
        return cls("block", n_core=n_core, n_cladding=n_cladding,
                   core_half_width=core_half_width)

    @classmethod
    def ybranch(cls, arm_half_width: float = 0.08, split_x: float = 0.35,
                arm_offset: float = 0.25, n_core: float = 1.516,
                n_cladding: float = 1.0) -> "GeometrySpec":
        return cls("ybranch", n_core=n_core, n_cladding=n_cladding,
                   core_half_width=arm_half_width, split_x=split_x,
                   arm_offset=arm_offset)

    def material(self, xc: np.ndarray, yc: np.ndarray,
                 extent: tuple[float, float, float, float]) -> np.ndarray:
        """Material id (CORE / CLADDING) at normalized cell centres."""
        x0, x1, y0, y1 = extent
        s = (xc - x0) / (x1 - x0)
        t = (yc - y0) / (y1 - y0)
        if self.kind == "plain":
            return np.full(s.shape, CLADDING, dtype=np.int64)
        w = self.core_half_width
        if self.kind == "block":
            core = np.abs(t - 0.5) < w
        else:
            # straight feed, then two arms bending linearly away from the axis
            ramp = np.clip((s - self.split_x) / (1.0 - self.split_x), 0.0, 1.0)
            offset = self.arm_offset * ramp
            core = (np.abs(t - 0.5 - offset) < w) | (np.abs(t - 0.5 + offset) < w)
        return np.where(core, CORE, CLADDING).astype(np.int64)

    def refractive_index(self, material: np.ndarray) -> np.ndarray:
        return np.where(material == CORE, self.n_core, self.n_cladding)


@dataclass
class StructuredMesh:
    nx: int
    ny: int
    extent: tuple[float, float, float, float]
    vertices: np.ndarray          # (nv, 2)
    cells: np.ndarray             # (nc, 4) counter-clockwise vertex ids
    cell_edges: np.ndarray        # (nc, 4) bottom, right, top, left
    material: np.ndarray          # (nc,)
    edges: np.ndarray             # (ne, 2) lower -> higher vertex id
    edge_tags: list[BoundaryTag]
    geometry: GeometrySpec = field(default_factory=GeometrySpec.plain)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.extent
        return (x1 - x0) / self.nx, (y1 - y0) / self.ny

    def edge_length(self, e) -> np.ndarray:
        a, b = self.edges[e].T
        return np.linalg.norm(self.vertices[b] - self.vertices[a], axis=-1)

    def edge_cells(self) -> list[list[int]]:
        """Cells adjacent to each edge, in ascending cell order."""
        adj: list[list[int]] = [[] for _ in range(self.n_edges)]
        for c, row in enumerate(self.cell_edges):
            for e in row:
                adj[e].append(c)
        return adj

    def refractive_index(self) -> np.ndarray:
        return self.geometry.refractive_index(self.material)

    def cell_centers(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)


def build_rect_mesh(nx: int, ny: int, geom: GeometrySpec | None = None,
                    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
                    ) -> StructuredMesh:
    """Uniform ``nx`` x ``ny`` quadrilateral grid of the rectangle ``extent``.

    The left side is tagged as the incident port, the other three sides as
    absorbing boundary.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"need at least one cell per axis, got nx={nx}, ny={ny}")
    geom = geom or GeometrySpec.plain()
    x0, x1, y0, y1 = extent
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate extent")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    nh = nx * (ny + 1)

    def hedge(i, j):
        return j * nx + i

    def vedge(i, j):
        return nh + j * (nx + 1) + i

    hi, hj = np.meshgrid(np.arange(nx), np.arange(ny + 1))
    vi, vj = np.meshgrid(np.arange(nx + 1), np.arange(ny))
    hedges = np.column_stack([vid(hi, hj).ravel(), vid(hi + 1, hj).ravel()])
    vedges = np.column_stack([vid(vi, vj).ravel(), vid(vi, vj + 1).ravel()])
    edges = np.vstack([hedges, vedges]).astype(np.int64)

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci, cj = ci.ravel(), cj.ravel()
    cells = np.column_stack([vid(ci, cj), vid(ci + 1, cj),
                             vid(ci + 1, cj + 1), vid(ci, cj + 1)]).astype(np.int64)
    cell_edges = np.column_stack([hedge(ci, cj), vedge(ci + 1, cj),
                                  hedge(ci, cj + 1), vedge(ci, cj)]).astype(np.int64)

    centers = vertices[cells].mean(axis=1)
    material = geom.material(centers[:, 0], centers[:, 1], extent)

    tags = [INTERIOR] * len(edges)
    for i in range(nx):
        tags[hedge(i, 0)] = GAMMA_INFTY
        tags[hedge(i, ny)] = GAMMA_INFTY
    for j in range(ny):
        tags[vedge(0, j)] = GAMMA_INC
        tags[vedge(nx, j)] = GAMMA_INFTY

    return StructuredMesh(nx, ny, tuple(map(float, extent)), vertices, cells,
                          cell_edges, material, edges, tags, geom)


@dataclass
class Partition:
    px: int
    py: int
    subdomain_of_cell: np.ndarray                       # ids 1..n_dom
    interfaces: dict[tuple[int, int], list[int]]        # keys with i < j
    cells_of: dict[int, np.ndarray]
    edges_of: dict[int, np.ndarray]

    @property
    def n_dom(self) -> int:
        return self.px * self.py

    def interface_edges(self, i: int, j: int) -> list[int]:
        """Edge list of the interface between ``i`` and ``j``, either order."""
        return self.interfaces.get((min(i, j), max(i, j)), [])

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.interfaces:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)


def partition_grid(mesh: StructuredMesh, px: int, py: int) -> Partition:
    """Split the grid into ``px`` x ``py`` blocks of cells, numbered row-major from 1.

    Shared edges are retagged as interfaces on ``mesh`` in place.
    """
    if px < 1 or py < 1 or mesh.nx % px or mesh.ny % py:
        raise ValueError(f"partition {px}x{py} does not divide mesh {mesh.nx}x{mesh.ny}")
    bx, by = mesh.nx // px, mesh.ny // py
    c = np.arange(mesh.n_cells)
    ci, cj = c % mesh.nx, c // mesh.nx
    sub = (cj // by) * px + (ci // bx) + 1

    # clear tags from an earlier partition
    for e, tag in enumerate(mesh.edge_tags):
        if tag.kind is TagKind.INTERFACE:
            mesh.edge_tags[e] = INTERIOR

    interfaces: dict[tuple[int, int], list[int]] = {}
    for e, cs in enumerate(mesh.edge_cells()):
        if len(cs) == 2:
            a, b = sub[cs[0]], sub[cs[1]]
            if a != b:
                tag = interface_tag(int(a), int(b))
                mesh.edge_tags[e] = tag
                interfaces.setdefault(tag.pair, []).append(e)

    cells_of = {d: np.flatnonzero(sub == d) for d in range(1, px * py + 1)}
    edges_of = {d: np.unique(mesh.cell_edges[cs]) for d, cs in cells_of.items()}
    return Partition(px, py, sub, dict(sorted(interfaces.items())), cells_of, edges_of)


def boundary_edges(mesh: StructuredMesh, tag: BoundaryTag) -> list[int]:
    """All edges carrying ``tag``, ascending."""
    return [e for e, t in enumerate(mesh.edge_tags) if t == tag]


def write_mesh(mesh: StructuredMesh, path) -> None:
    """Plain-text dump: ``v x y``, ``e v0 v1 tag`` and ``c v0 v1 v2 v3 mat`` lines."""
    lines = [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"e {a} {b} {t}" for (a, b), t in zip(mesh.edges, mesh.edge_tags)]
    lines += [f"c {' '.join(map(str, vs))} {m}" for vs, m in zip(mesh.cells, mesh.material)]
    Path(path).write_text("\n".join(lines) + "\n")
