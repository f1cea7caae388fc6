"""Shared finite element helpers: basis evaluation on mesh elements, scalar
P1/Q1 operators on a structured mesh, and face-jump penalty matrices."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .basis import get_basis
from .cutquad import element_rule, line_points


def eval_basis(mesh, k: int, elements: np.ndarray, points: np.ndarray,
               dx: int = 0, dy: int = 0) -> np.ndarray:
    """Physical derivative ``(dx, dy)`` of the degree-``k`` basis of each
    element at the matching point. Returns (npts, nloc)."""
    elements = np.asarray(elements)
    local = mesh.to_local(points, elements)
    shapes = mesh.element_shape[elements]
    out = None
    for shape in np.unique(shapes):
        sel = shapes == shape
        vals = get_basis(int(shape), k)(local[sel], dx, dy)
        if out is None:
            out = np.empty((len(elements), vals.shape[1]))
        out[sel] = vals
    if out is None:
        nloc = get_basis(int(mesh.element_shape[0]), k).n
        return np.zeros((0, nloc))
    return out / mesh.h ** (dx + dy)


def eval_gradients(mesh, k, elements, points) -> np.ndarray:
    """Physical basis gradients, (npts, nloc, 2)."""
    return np.stack([eval_basis(mesh, k, elements, points, 1, 0),
                     eval_basis(mesh, k, elements, points, 0, 1)], axis=-1)


def eval_normal_derivative(mesh, k, elements, points, normals, order) -> np.ndarray:
    elements = np.asarray(elements)
    local = mesh.to_local(points, elements)
    shapes = mesh.element_shape[elements]
    nloc = get_basis(int(mesh.element_shape[0]), k).n
    out = np.empty((len(elements), nloc))
    for shape in np.unique(shapes):
        sel = shapes == shape
        out[sel] = get_basis(int(shape), k).normal_derivative(local[sel], normals[sel], order, mesh.h)
    return out


def coo(rows, cols, vals, n) -> sp.csr_matrix:
    return sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n)).tocsr()


def scatter_element_matrices(conn: np.ndarray, mats: np.ndarray, n: int) -> sp.csr_matrix:
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1)
    cols = np.tile(conn, (1, nloc))
    return coo(rows, cols, mats.reshape(len(conn), -1), n)


class ScalarP1Space:
    """Continuous P1 (triangles) / Q1 (quads) functions on all of a mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.conn = mesh.nodes1
        self.n = mesh.n_vertices
        self._ref = {}
        for shape in np.unique(mesh.element_shape):
            pts, w = element_rule(int(shape), 4)
            basis = get_basis(int(shape), 1)
            N = basis(pts)
            G = basis.gradient(pts)
            mass = np.einsum("q,qa,qb->ab", w, N, N)
            stiff = np.einsum("q,qai,qbi->ab", w, G, G)
            self._ref[int(shape)] = (pts, w, N, G, mass, stiff)
        self._mass = None
        self._stiffness = None

    def reference(self, shape: int):
        return self._ref[shape]

    def _per_element(self, which: int, scale: float, elements=None) -> np.ndarray:
        shapes = self.mesh.element_shape if elements is None else self.mesh.element_shape[elements]
        out = np.empty((len(shapes), self.conn.shape[1], self.conn.shape[1]))
        for shape, ref in self._ref.items():
            out[shapes == shape] = ref[which] * scale
        return out

    def element_mass(self, elements=None) -> np.ndarray:
        return self._per_element(4, self.mesh.h**2, elements)

    def element_stiffness(self, elements=None) -> np.ndarray:
        return self._per_element(5, 1.0, elements)

    @property
    def mass(self) -> sp.csr_matrix:
        if self._mass is None:
            self._mass = scatter_element_matrices(self.conn, self.element_mass(), self.n)
        return self._mass

    @property
    def stiffness(self) -> sp.csr_matrix:
        if self._stiffness is None:
            self._stiffness = scatter_element_matrices(self.conn, self.element_stiffness(), self.n)
        return self._stiffness

    def masked_mass(self, element_mask: np.ndarray) -> sp.csr_matrix:
        idx = np.nonzero(element_mask)[0]
        return scatter_element_matrices(self.conn[idx], self.element_mass(idx), self.n)

    def element_gradients(self, values: np.ndarray, shape_points: bool = True):
        """Gradient of a nodal field at each element's reference quadrature
        points: returns (ne, nq, 2) and the reference weights (nq,) per shape
        (all shapes of one mesh share the point count)."""
        ne = self.mesh.n_elements
        vals = values[self.conn]
        out = None
        w_out = None
        for shape, (pts, w, N, G, _, _) in self._ref.items():
            sel = self.mesh.element_shape == shape
            g = np.einsum("ea,qai->eqi", vals[sel], G) / self.mesh.h
            if out is None:
                out = np.empty((ne, len(w), 2))
                w_out = w
            out[sel] = g
        return out, w_out

    def gradient_matrices(self):
        """Per shape: reference basis gradients at quadrature points (h = 1)."""
        return {s: (r[1], r[3]) for s, r in self._ref.items()}


def face_jump_triplets(mesh, element_nodes: np.ndarray, k: int, faces: np.ndarray,
                       orders_weights, degree: int):
    """Triplets of ``sum_j w_j (jump d^j_n u, jump d^j_n v)_F`` over ``faces``.

    ``orders_weights`` is a sequence of ``(j, w_j)``; node ids are those of
    ``element_nodes``.
    """
    faces = np.asarray(faces, dtype=np.int64)
    nloc = element_nodes.shape[1]
    if len(faces) == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, np.zeros(0)
    verts = mesh.face_vertices[faces]
    p0 = mesh.vertices[verts[:, 0]]
    p1 = mesh.vertices[verts[:, 1]]
    pts, w = line_points(p0, p1, degree)
    nf, nq = w.shape
    kp = np.repeat(mesh.face_elements[faces, 0], nq)
    km = np.repeat(mesh.face_elements[faces, 1], nq)
    normals = np.repeat(mesh.face_normals[faces], nq, axis=0)
    flat = pts.reshape(-1, 2)
    mats = np.zeros((nf, 2 * nloc, 2 * nloc))
    for order, weight in orders_weights:
        if weight == 0.0:
            continue
        dp = eval_normal_derivative(mesh, k, kp, flat, normals, order)
        dm = eval_normal_derivative(mesh, k, km, flat, normals, order)
        jump = np.concatenate([dp, -dm], axis=1).reshape(nf, nq, 2 * nloc)
        mats += weight * np.einsum("fq,fqa,fqb->fab", w, jump, jump)
    nodes = np.concatenate([element_nodes[mesh.face_elements[faces, 0]],
                            element_nodes[mesh.face_elements[faces, 1]]], axis=1)
    rows = np.repeat(nodes, 2 * nloc, axis=1)
    cols = np.tile(nodes, (1, 2 * nloc))
    return rows.ravel(), cols.ravel(), mats.reshape(nf, -1).ravel()
