"""Structured background meshes of the design domain and their uniform refinement."""
from __future__ import annotations

from dataclasses import dataclass
from math import hypot

import numpy as np

from .basis import LOWER, QUAD, UPPER, lagrange_nodes

TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"
_KIND_ALIASES = {"tri": TRIANGLE, "triangle": TRIANGLE, "triangles": TRIANGLE,
                 "quad": QUADRILATERAL, "quadrilateral": QUADRILATERAL, "quads": QUADRILATERAL}


class MeshError(ValueError):
    pass


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise MeshError(f"unknown element kind {kind!r}") from None


@dataclass(frozen=True)
class DesignDomain:
    """Axis-aligned rectangle ``[0, width] x [0, height]``, optionally minus a
    rectangular void ``(x0, y0, x1, y1)`` (the L-shape)."""

    width: float
    height: float
    void: tuple[float, float, float, float] | None = None

    @property
    def area(self) -> float:
        a = self.width * self.height
        if self.void is not None:
            x0, y0, x1, y1 = self.void
            a -= (x1 - x0) * (y1 - y0)
        return a

    @property
    def diameter(self) -> float:
        return hypot(self.width, self.height)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        inside = ((pts[:, 0] >= 0) & (pts[:, 0] <= self.width)
                  & (pts[:, 1] >= 0) & (pts[:, 1] <= self.height))
        if self.void is not None:
            x0, y0, x1, y1 = self.void
            in_void = ((pts[:, 0] > x0) & (pts[:, 0] < x1)
                       & (pts[:, 1] > y0) & (pts[:, 1] < y1))
            inside &= ~in_void
        return inside


def _as_count(length: float, h: float, what: str) -> int:
    n = length / h
    m = int(round(n))
    if m < 1 or abs(n - m) > 1e-9 * max(1.0, n):
        raise MeshError(f"{what} = {length} is not an integer multiple of h = {h}")
    return m


class StructuredMesh:
    """Conforming grid of squares (or squares split along the bottom-left to
    top-right diagonal) with spacing ``h`` over a :class:`DesignDomain`.

    Interior faces are stored once with ``face_elements[f] = (K+, K-)``,
    K+ being the lower element id; ``face_vertices`` run counter-clockwise
    around K+ and ``face_normals`` is the outward normal of K+.
    Boundary faces carry their single element and outward normal.
    Treat instances as immutable.
    """

    def __init__(self, kind: str, h: float, cell_mask: np.ndarray,
                 origin=(0.0, 0.0), domain: DesignDomain | None = None):
        self.kind = normalize_kind(kind)
        self.h = float(h)
        self.origin = np.asarray(origin, dtype=float)
        self.cell_mask = np.asarray(cell_mask, dtype=bool)
        self.nx, self.ny = self.cell_mask.shape
        self.domain = domain
        self._build()

    # ------------------------------------------------------------------ build
    def _build(self):
        nx, ny, h = self.nx, self.ny, self.h
        used = np.zeros((nx + 1, ny + 1), dtype=bool)
        ci, cj = np.nonzero(self.cell_mask.T)[::-1]  # j-major cell order
        order = np.lexsort((ci, cj))
        ci, cj = ci[order], cj[order]
        for di in (0, 1):
            for dj in (0, 1):
                used[ci + di, cj + dj] = True
        grid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
        vi, vj = np.nonzero(used.T)[::-1]
        vorder = np.lexsort((vi, vj))
        vi, vj = vi[vorder], vj[vorder]
        grid[vi, vj] = np.arange(len(vi))
        self.grid_vertex = grid
        self.vertex_index = np.stack([vi, vj], axis=1)
        self.vertices = self.origin + h * self.vertex_index.astype(float)

        bl = grid[ci, cj]
        br = grid[ci + 1, cj]
        tr = grid[ci + 1, cj + 1]
        tl = grid[ci, cj + 1]
        ncell = len(ci)
        self.cell_element = -np.ones((nx, ny, 2), dtype=np.int64)
        if self.kind == QUADRILATERAL:
            self.elements = np.stack([bl, br, tr, tl], axis=1)
            self.element_cell = np.stack([ci, cj], axis=1)
            self.element_shape = np.full(ncell, QUAD, dtype=np.int64)
            self.cell_element[ci, cj, 0] = np.arange(ncell)
            self.cell_element[ci, cj, 1] = np.arange(ncell)
        else:
            lower = np.stack([bl, br, tr], axis=1)
            upper = np.stack([bl, tr, tl], axis=1)
            self.elements = np.empty((2 * ncell, 3), dtype=np.int64)
            self.elements[0::2] = lower
            self.elements[1::2] = upper
            self.element_cell = np.repeat(np.stack([ci, cj], axis=1), 2, axis=0)
            self.element_shape = np.tile(np.array([LOWER, UPPER]), ncell)
            self.cell_element[ci, cj, 0] = 2 * np.arange(ncell)
            self.cell_element[ci, cj, 1] = 2 * np.arange(ncell) + 1
        self.element_origin = self.origin + h * self.element_cell.astype(float)
        self.nodes1 = lattice_element_nodes(self, 1)
        self._build_faces()

    def _build_faces(self):
        els = self.elements
        ne, nv_el = els.shape
        a = els.reshape(-1)
        b = np.roll(els, -1, axis=1).reshape(-1)
        owner = np.repeat(np.arange(ne), nv_el)
        nv = len(self.vertices)
        key = np.minimum(a, b) * nv + np.maximum(a, b)
        order = np.argsort(key, kind="stable")
        key_s = key[order]
        uniq, start, counts = np.unique(key_s, return_index=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge in mesh")
        two = start[counts == 2]
        one = start[counts == 1]
        first = order[two]
        second = order[two + 1]
        # lower element id becomes K+
        swap = owner[first] > owner[second]
        kp = np.where(swap, second, first)
        km = np.where(swap, first, second)
        self.face_vertices = np.stack([a[kp], b[kp]], axis=1)
        self.face_elements = np.stack([owner[kp], owner[km]], axis=1)
        self.face_normals = self._edge_normals(self.face_vertices)
        bidx = order[one]
        self.bface_vertices = np.stack([a[bidx], b[bidx]], axis=1)
        self.bface_element = owner[bidx]
        self.bface_normals = self._edge_normals(self.bface_vertices)

    def _edge_normals(self, edges: np.ndarray) -> np.ndarray:
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    # ---------------------------------------------------------------- queries
    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_interior_faces(self) -> int:
        return len(self.face_elements)

    @property
    def element_area(self) -> float:
        return self.h**2 if self.kind == QUADRILATERAL else 0.5 * self.h**2

    def element_areas(self) -> np.ndarray:
        return np.full(self.n_elements, self.element_area)

    def to_local(self, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Local cell coordinates of ``points`` w.r.t. the cells of ``elements``."""
        return (np.asarray(points) - self.element_origin[elements]) / self.h

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Element containing each point (-1 if outside the mesh)."""
        pts = np.atleast_2d(points)
        rel = (pts - self.origin) / self.h
        ij = np.floor(rel).astype(np.int64)
        i = np.clip(ij[:, 0], 0, self.nx - 1)
        j = np.clip(ij[:, 1], 0, self.ny - 1)
        loc = rel - np.stack([i, j], axis=1)
        half = (loc[:, 1] > loc[:, 0]).astype(np.int64)
        out = self.cell_element[i, j, half]
        outside = (rel[:, 0] < -1e-12) | (rel[:, 1] < -1e-12) | \
            (rel[:, 0] > self.nx + 1e-12) | (rel[:, 1] > self.ny + 1e-12)
        out[outside] = -1
        return out

    def vertex_boundary_normals(self) -> np.ndarray:
        """Per vertex, which Cartesian normal directions occur on adjacent
        boundary faces: (nv, 2) bool mask of (x-normal, y-normal)."""
        mask = np.zeros((self.n_vertices, 2), dtype=bool)
        nrm = np.abs(self.bface_normals) > 0.5
        for c in (0, 1):
            verts = self.bface_vertices[nrm[:, c]].reshape(-1)
            mask[verts, c] = True
        return mask


def lattice_element_nodes(mesh: StructuredMesh, k: int) -> np.ndarray:
    """Vertex ids of the ``k``-refined grid sitting on each element's Lagrange
    nodes, in :func:`~cutopt.basis.lagrange_nodes` order.

    ``mesh.grid_vertex`` must be the grid of spacing ``mesh.h / k``; for
    ``k = 1`` this is the mesh's own vertex grid.
    """
    return _lattice_nodes(mesh.element_cell, mesh.element_shape, mesh.grid_vertex, k)


def _lattice_nodes(cells, shapes, grid, k):
    nloc = len(lagrange_nodes(shapes[0], k))
    out = np.empty((len(cells), nloc), dtype=np.int64)
    for shape in np.unique(shapes):
        sel = np.nonzero(shapes == shape)[0]
        lat = lagrange_nodes(shape, k)
        gi = cells[sel, 0, None] * k + lat[None, :, 0]
        gj = cells[sel, 1, None] * k + lat[None, :, 1]
        out[sel] = grid[gi, gj]
    return out


def build_background_mesh(domain: DesignDomain, h: float, kind: str) -> StructuredMesh:
    """Mesh ``domain`` with cells of size ``h``; every side must be a multiple of ``h``."""
    if h <= 0:
        raise MeshError("h must be positive")
    nx = _as_count(domain.width, h, "domain width")
    ny = _as_count(domain.height, h, "domain height")
    mask = np.ones((nx, ny), dtype=bool)
    if domain.void is not None:
        x0, y0, x1, y1 = domain.void
        i0 = _as_count(x0, h, "void x0") if x0 > 0 else 0
        j0 = _as_count(y0, h, "void y0") if y0 > 0 else 0
        i1 = _as_count(x1, h, "void x1")
        j1 = _as_count(y1, h, "void y1")
        mask[i0:i1, j0:j1] = False
    return StructuredMesh(kind, h, mask, domain=domain)


@dataclass
class RefinedMesh:
    """k-fold uniform refinement of a background mesh.

    ``element_nodes[e]`` lists the fine vertex id of every P_k/Q_k Lagrange
    node of coarse element ``e`` (so Lagrange nodes are numbered by fine
    vertices); ``parent[f]`` is the coarse element containing fine element f.
    """

    coarse: StructuredMesh
    fine: StructuredMesh
    k: int
    parent: np.ndarray
    element_nodes: np.ndarray

    @property
    def node_coordinates(self) -> np.ndarray:
        return self.fine.vertices


def refine_uniform(mesh: StructuredMesh, k: int) -> RefinedMesh:
    if k < 1:
        raise MeshError("refinement factor k must be >= 1")
    fine_mask = np.kron(mesh.cell_mask, np.ones((k, k), dtype=bool))
    fine = StructuredMesh(mesh.kind, mesh.h / k, fine_mask, origin=mesh.origin, domain=mesh.domain)

    fcell = fine.element_cell
    ccell = fcell // k
    half = np.zeros(fine.n_elements, dtype=np.int64)
    if mesh.kind == TRIANGLE:
        centroid = {LOWER: (2 / 3, 1 / 3), UPPER: (1 / 3, 2 / 3)}
        c = np.array([centroid[s] for s in fine.element_shape])
        loc = ((fcell % k) + c) / k
        half = (loc[:, 1] > loc[:, 0]).astype(np.int64)
    parent = mesh.cell_element[ccell[:, 0], ccell[:, 1], half]

    element_nodes = _lattice_nodes(mesh.element_cell, mesh.element_shape, fine.grid_vertex, k)
    return RefinedMesh(coarse=mesh, fine=fine, k=k, parent=parent, element_nodes=element_nodes)


def face_jump_orientation(mesh: StructuredMesh, face_id: int):
    """``(K+, K-, n_F)`` of an interior face.

    Faces are numbered interior first, then boundary; a boundary id is rejected.
    """
    if face_id < 0 or face_id >= mesh.n_interior_faces + len(mesh.bface_element):
        raise IndexError(f"face id {face_id} out of range")
    if face_id >= mesh.n_interior_faces:
        raise MeshError(f"face {face_id} is a boundary face; jumps need an interior face")
    kp, km = mesh.face_elements[face_id]
    return int(kp), int(km), mesh.face_normals[face_id].copy()
