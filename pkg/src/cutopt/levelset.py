"""Level-set description of the material domain.

The level set is a P1 (triangles) / Q1 (quads) field on the refined mesh,
i.e. P1-iso-P_k with respect to the background mesh. The material domain
is where the level set is positive; vertices with value exactly zero count
as material when clipping so that the extracted geometry is watertight.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .basis import QUAD, get_basis
from .boundary import BoundaryPieces, BoundarySpec, boundary_pieces
from .cutquad import element_rule, fan_triangles, map_triangles, signed_area, square_rule
from .fem import ScalarP1Space
from .mesh import QUADRILATERAL, RefinedMesh, StructuredMesh

INSIDE, CUT, OUTSIDE = 1, 0, -1


class DegenerateDomainError(RuntimeError):
    """The material domain is empty or cannot carry the prescribed supports."""


@dataclass
class LevelSetField:
    values: np.ndarray
    mesh: RefinedMesh

    def copy(self) -> "LevelSetField":
        return LevelSetField(self.values.copy(), self.mesh)

    def with_values(self, values: np.ndarray) -> "LevelSetField":
        return LevelSetField(np.asarray(values, dtype=float), self.mesh)

    @property
    def fine(self) -> StructuredMesh:
        return self.mesh.fine


@dataclass(frozen=True)
class InitialDesign:
    """Circular holes ``(cx, cy, r)`` cut from the design domain, or a custom
    signed-distance closure (positive in material)."""

    holes: tuple[tuple[float, float, float], ...] = ()
    custom: Callable[[np.ndarray], np.ndarray] | None = None


def scalar_space(fine: StructuredMesh) -> ScalarP1Space:
    space = getattr(fine, "_p1_space", None)
    if space is None:
        space = ScalarP1Space(fine)
        fine._p1_space = space
    return space


def init_levelset(spec: InitialDesign, mesh: RefinedMesh) -> LevelSetField:
    x = mesh.fine.vertices
    diam = mesh.coarse.domain.diameter if mesh.coarse.domain is not None else float(np.ptp(x, axis=0).max() * np.sqrt(2))
    if spec.custom is not None:
        phi = np.asarray(spec.custom(x), dtype=float)
    else:
        phi = np.full(len(x), diam)
        for cx, cy, r in spec.holes:
            phi = np.minimum(phi, np.hypot(x[:, 0] - cx, x[:, 1] - cy) - r)
    return LevelSetField(np.clip(phi, -diam, diam), mesh)


def element_status(vals: np.ndarray) -> np.ndarray:
    """Status from the level set at each element's vertices (rows of ``vals``)."""
    status = np.full(len(vals), OUTSIDE, dtype=np.int8)
    status[(vals > 0).any(axis=1) & (vals < 0).any(axis=1)] = CUT
    status[(vals >= 0).all(axis=1)] = INSIDE
    return status


# --------------------------------------------------------------------------- geometry
def clip_element(coords: np.ndarray, vals: np.ndarray, quad: bool):
    """Clip one element (counter-clockwise vertices) to ``vals >= 0``.

    Returns the material polygons and the boundary segments ``(p, q)``
    oriented so that the material lies to their left.
    """
    inside = vals >= 0
    if inside.all():
        return [coords.copy()], []
    if not inside.any():
        return [], []
    n = len(vals)
    walk = []
    for i in range(n):
        j = (i + 1) % n
        if inside[i]:
            walk.append((coords[i], 0))
        if inside[i] != inside[j]:
            t = vals[i] / (vals[i] - vals[j])
            walk.append((coords[i] + t * (coords[j] - coords[i]), -1 if inside[i] else 1))
    start = next(i for i, (_, tag) in enumerate(walk) if tag == 1)
    walk = walk[start:] + walk[:start]
    chains = []
    for p, tag in walk:
        if tag == 1:
            current = [p]
        else:
            current.append(p)
        if tag == -1:
            chains.append(current)
    # saddle quad: two separate material corners unless the cell centre is material
    if quad and len(chains) == 2 and vals.mean() < 0:
        polys = [np.array(c) for c in chains]
        segs = [(c[-1], c[0]) for c in chains]
    else:
        polys = [np.concatenate([np.array(c) for c in chains])]
        m = len(chains)
        segs = [(chains[i][-1], chains[(i + 1) % m][0]) for i in range(m)]
    return polys, segs


@dataclass
class CutGeometry:
    """Clipped material polygons and boundary segments on the refined mesh."""

    fine: StructuredMesh
    status: np.ndarray             # per fine element: INSIDE / CUT / OUTSIDE
    material_area: np.ndarray      # per fine element
    polygons: list = field(default_factory=list)
    polygon_element: np.ndarray = None
    seg_p0: np.ndarray = None
    seg_p1: np.ndarray = None
    seg_normal: np.ndarray = None
    seg_element: np.ndarray = None

    @property
    def volume(self) -> float:
        return float(self.material_area.sum())

    @property
    def n_segments(self) -> int:
        return len(self.seg_element)

    @property
    def boundary_length(self) -> float:
        return float(np.linalg.norm(self.seg_p1 - self.seg_p0, axis=1).sum())

    def clipped(self, element: int) -> list[np.ndarray]:
        """Material polygons of one fine element."""
        if self.status[element] == INSIDE:
            return [self.fine.vertices[self.fine.elements[element]]]
        return [p for p, e in zip(self.polygons, self.polygon_element) if e == element]

    def quadrature(self, degree: int, elements: np.ndarray | None = None):
        """Rule over the material part of the given fine elements (all by default).

        Returns physical points (m, 2), weights (m,) and the owning fine element (m,).
        """
        fine = self.fine
        if elements is None:
            elements = np.arange(fine.n_elements)
        elements = np.asarray(elements, dtype=np.int64)
        pts, wts, own = [], [], []
        full = elements[self.status[elements] == INSIDE]
        for shape in np.unique(fine.element_shape[full]):
            sel = full[fine.element_shape[full] == shape]
            ref, w = element_rule(int(shape), degree)
            pts.append((fine.element_origin[sel, None, :] + fine.h * ref[None]).reshape(-1, 2))
            wts.append(np.broadcast_to(w * fine.h**2, (len(sel), len(w))).reshape(-1))
            own.append(np.repeat(sel, len(w)))
        cut = elements[self.status[elements] == CUT]
        if len(cut):
            tris, owner = self.sub_triangles(cut)
            if len(tris):
                p, w = map_triangles(tris, degree)
                pts.append(p.reshape(-1, 2))
                wts.append(w.reshape(-1))
                own.append(np.repeat(owner, w.shape[1]))
        if not pts:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64)
        return np.concatenate(pts), np.concatenate(wts), np.concatenate(own)

    def sub_triangles(self, elements: np.ndarray | None = None):
        """Fan triangles of the cut polygons: (m, 3, 2) and their fine element."""
        if elements is None:
            polys = self.polygons
            owners = self.polygon_element
        else:
            keep = np.isin(self.polygon_element, elements)
            polys = [p for p, k in zip(self.polygons, keep) if k]
            owners = self.polygon_element[keep]
        if not polys:
            return np.zeros((0, 3, 2)), np.zeros(0, dtype=np.int64)
        tris = [fan_triangles(p) for p in polys]
        counts = [len(t) for t in tris]
        return np.concatenate(tris), np.repeat(owners, counts)


def extract_geometry(levelset: LevelSetField) -> CutGeometry:
    fine = levelset.fine
    phi = levelset.values
    ev = phi[fine.elements]
    status = element_status(ev)
    area_k = fine.element_area
    material_area = np.where(status == INSIDE, area_k, 0.0)
    quad = fine.kind == QUADRILATERAL
    todo = np.nonzero((status == CUT) | ((status == OUTSIDE) & (ev == 0).any(axis=1)))[0]
    polys, poly_el = [], []
    p0s, p1s, seg_el = [], [], []
    min_len = 1e-14 * fine.h
    for e in todo:
        coords = fine.vertices[fine.elements[e]]
        pl, sg = clip_element(coords, ev[e], quad)
        for p in pl:
            a = signed_area(p)
            if a > 1e-14 * area_k:
                polys.append(p)
                poly_el.append(e)
                material_area[e] += a
        for p, q in sg:
            if np.linalg.norm(q - p) > min_len:
                p0s.append(p)
                p1s.append(q)
                seg_el.append(e)
    if p0s:
        p0 = np.array(p0s)
        p1 = np.array(p1s)
        d = p1 - p0
        normal = np.stack([d[:, 1], -d[:, 0]], axis=1)
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    else:
        p0 = p1 = normal = np.zeros((0, 2))
    return CutGeometry(fine=fine, status=status, material_area=material_area,
                       polygons=polys, polygon_element=np.array(poly_el, dtype=np.int64),
                       seg_p0=p0, seg_p1=p1, seg_normal=normal,
                       seg_element=np.array(seg_el, dtype=np.int64))


# --------------------------------------------------------------------------- classification
@dataclass
class DomainClassification:
    status: np.ndarray          # per coarse element
    active: np.ndarray          # bool, coarse elements carrying dofs (K_h)
    fine_status: np.ndarray
    cut_dirichlet: np.ndarray   # bool, coarse elements of Omega_{h,D}
    cut_neumann: np.ndarray     # bool, coarse elements of Omega_{h,N}
    faces_active: np.ndarray    # interior coarse faces of F_h
    faces_dirichlet: np.ndarray  # F_{h,D}
    faces_neumann: np.ndarray    # F_{h,N}
    boundary_band: np.ndarray   # bool per fine element, closure meets the zero set
    dirichlet_pieces: BoundaryPieces

    @property
    def active_elements(self) -> np.ndarray:
        return np.nonzero(self.active)[0]

    @property
    def counts(self) -> dict:
        return {"inside": int((self.status == INSIDE).sum()),
                "cut": int((self.status == CUT).sum()),
                "outside": int((self.status == OUTSIDE).sum())}


def classify(levelset: LevelSetField, mesh: StructuredMesh | None = None,
             boundary_spec: BoundarySpec | None = None) -> DomainClassification:
    """Element status, active mesh and ghost-penalty face sets.

    A coarse element is inside when the level set is >= 0 at all of its
    Lagrange nodes, outside when it is <= 0 at all of them (and not inside),
    cut otherwise. Cut elements touching a Dirichlet boundary form
    Omega_{h,D}; the remaining cut elements form Omega_{h,N}.
    """
    refined = levelset.mesh
    coarse = refined.coarse if mesh is None else mesh
    phi = levelset.values
    if not np.any(phi > 0):
        raise DegenerateDomainError("level set has no positive values: empty material domain")
    boundary_spec = boundary_spec or BoundarySpec()
    fine = refined.fine
    status = element_status(phi[refined.element_nodes])
    active = status != OUTSIDE
    fvals = phi[fine.elements]
    fine_status = element_status(fvals)
    band = (fvals.min(axis=1) <= 0) & (fvals.max(axis=1) >= 0)

    pieces = boundary_pieces(fine, boundary_spec.dirichlet, phi)
    cut = status == CUT
    touches_d = np.zeros(coarse.n_elements, dtype=bool)
    touches_d[refined.parent[pieces.element]] = True
    if boundary_spec.levelset_dirichlet:
        touches_d[:] = True
    cut_d = cut & touches_d
    cut_n = cut & ~touches_d

    fe = coarse.face_elements
    both_active = active[fe[:, 0]] & active[fe[:, 1]]
    on_d = both_active & (cut_d[fe[:, 0]] | cut_d[fe[:, 1]])
    on_n = both_active & ~on_d & (cut_n[fe[:, 0]] | cut_n[fe[:, 1]])
    return DomainClassification(
        status=status, active=active, fine_status=fine_status,
        cut_dirichlet=cut_d, cut_neumann=cut_n,
        faces_active=np.nonzero(both_active)[0],
        faces_dirichlet=np.nonzero(on_d)[0], faces_neumann=np.nonzero(on_n)[0],
        boundary_band=band, dirichlet_pieces=pieces)


# --------------------------------------------------------------------------- reinitialization
def _gradients(space: ScalarP1Space, phi: np.ndarray):
    """Level-set gradient at 2x2 Gauss points (quads) or the centroid
    (triangles). Returns grads (ne, nq, 2) and weights (nq,) summing to 1."""
    mesh = space.mesh
    vals = phi[space.conn]
    if mesh.kind == QUADRILATERAL:
        pts, w = square_rule(2)
        G = get_basis(QUAD, 1).gradient(pts)
        return np.einsum("ea,qai->eqi", vals, G) / mesh.h, w
    out = np.empty((mesh.n_elements, 1, 2))
    for shape in np.unique(mesh.element_shape):
        sel = mesh.element_shape == shape
        basis = get_basis(int(shape), 1)
        G = basis.gradient(np.array([[0.5, 0.5]]))
        out[sel] = np.einsum("ea,qai->eqi", vals[sel], G) / mesh.h
    return out, np.ones(1)


def reinitialize(levelset: LevelSetField, max_iters: int = 50, tol: float = 1e-3,
                 lumped: bool = True) -> LevelSetField:
    """Two-step elliptic reinitialization towards a signed distance function
    (positive in material).

    Step 1 replaces the level set on the elements touching the zero set by
    the L2 projection of ``phi / |grad phi|``; step 2 freezes those values
    and runs the fixed point ``(grad phi_m, grad v) = (grad phi_{m-1} /
    |grad phi_{m-1}|, grad v)`` on the remaining vertices.

    With ``lumped`` the projection uses the row-sum mass matrix, which keeps
    the sign of every vertex value (so thin members survive); otherwise the
    consistent mass matrix is used.
    """
    fine = levelset.fine
    space = scalar_space(fine)
    phi = levelset.values.astype(float).copy()
    vals = phi[space.conn]
    band = (vals.min(axis=1) <= 0) & (vals.max(axis=1) >= 0)
    if not band.any():
        raise DegenerateDomainError("level set does not change sign; nothing to reinitialize")

    grads, w = _gradients(space, phi)
    gnorm = np.einsum("q,eq->e", w, np.linalg.norm(grads, axis=2)) / w.sum()
    small = band & (gnorm < 1e-10)
    if small.any():
        warnings.warn(f"{int(small.sum())} boundary elements with |grad phi| < 1e-10; clamped",
                      RuntimeWarning, stacklevel=2)
    gnorm = np.maximum(gnorm, 1e-10)

    idx = np.nonzero(band)[0]
    Me = space.element_mass(idx)
    if lumped:
        rhs_e = Me.sum(axis=2) * vals[idx] / gnorm[idx, None]
    else:
        rhs_e = np.einsum("eab,eb->ea", Me, vals[idx]) / gnorm[idx, None]
    rhs = np.zeros(space.n)
    np.add.at(rhs, space.conn[idx], rhs_e)
    frozen = np.zeros(space.n, dtype=bool)
    frozen[space.conn[idx]] = True
    fz = np.nonzero(frozen)[0]
    M = space.masked_mass(band)[fz][:, fz]
    if lumped:
        phi[fz] = rhs[fz] / np.asarray(M.sum(axis=1)).ravel()
    else:
        phi[fz] = spla.spsolve(M.tocsc(), rhs[fz])

    free = np.nonzero(~frozen)[0]
    if len(free) == 0:
        return levelset.with_values(phi)
    K = space.stiffness
    Kff = K[free][:, free].tocsc()
    Kfd = K[free][:, fz]
    lu = spla.splu(Kff)
    lift = Kfd @ phi[fz]
    G_ref = {s: get_basis(int(s), 1).gradient for s in np.unique(fine.element_shape)}
    if fine.kind == QUADRILATERAL:
        qpts, qw = square_rule(2)
    else:
        qpts, qw = np.array([[0.5, 0.5]]), np.array([fine.element_area / fine.h**2])
    Gq = np.empty((fine.n_elements, len(qw), space.conn.shape[1], 2))
    for s, grad in G_ref.items():
        sel = fine.element_shape == s
        Gq[sel] = grad(qpts)[None]
    step_tol = tol * fine.h
    for _ in range(max_iters):
        g = np.einsum("ea,eqai->eqi", phi[space.conn], Gq) / fine.h
        nrm = np.linalg.norm(g, axis=2, keepdims=True)
        unit = g / np.maximum(nrm, 1e-10)
        # int_K unit . grad psi_a = h * sum_q w_q unit_q . G_ref[q, a]
        re = fine.h * np.einsum("q,eqi,eqai->ea", qw, unit, Gq)
        r = np.zeros(space.n)
        np.add.at(r, space.conn, re)
        new = lu.solve(r[free] - lift)
        change = np.max(np.abs(new - phi[free]))
        phi[free] = new
        if change < step_tol:
            break
    return levelset.with_values(phi)


def boundary_band_vertices(levelset: LevelSetField) -> np.ndarray:
    space = scalar_space(levelset.fine)
    vals = levelset.values[space.conn]
    band = (vals.min(axis=1) <= 0) & (vals.max(axis=1) >= 0)
    out = np.zeros(space.n, dtype=bool)
    out[space.conn[band]] = True
    return out


def gradient_norms(levelset: LevelSetField) -> np.ndarray:
    """Mean |grad phi| per fine element."""
    space = scalar_space(levelset.fine)
    grads, w = _gradients(space, levelset.values)
    return np.einsum("q,eq->e", w, np.linalg.norm(grads, axis=2)) / w.sum()


__all__ = [
    "INSIDE", "CUT", "OUTSIDE", "DegenerateDomainError", "LevelSetField", "InitialDesign",
    "init_levelset", "extract_geometry", "classify", "reinitialize", "CutGeometry",
    "DomainClassification", "clip_element", "element_status", "scalar_space",
    "gradient_norms", "boundary_band_vertices",
]
