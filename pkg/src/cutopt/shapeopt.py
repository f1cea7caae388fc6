"""Shape derivative, descent velocity, level-set transport and the
line-search optimization loop for compliance minimization."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .boundary import BoundarySpec, Segment, boundary_pieces
from .elasticity import (DisplacementField, ElasticityProblem, ElasticMaterial, LinearSystem,
                         LoadDetachedError, objective, solve)
from .fem import eval_gradients, face_jump_triplets
from .levelset import (CutGeometry, DegenerateDomainError, LevelSetField,
                       extract_geometry, reinitialize, scalar_space)
from .linsolve import SingularMatrixError
from .mesh import QUADRILATERAL, RefinedMesh

log = logging.getLogger(__name__)


class StationaryPoint(Exception):
    """The shape derivative vanishes; there is no descent direction."""


# --------------------------------------------------------------------------- derivative
@dataclass
class ShapeDerivative:
    """dJ(theta) = sum over fine vertices and components of values * theta."""

    values: np.ndarray  # (n_fine_vertices, 2)

    def __call__(self, theta: np.ndarray) -> float:
        return float(np.sum(self.values * np.asarray(theta).reshape(self.values.shape)))


def shape_derivative(u: DisplacementField, material: ElasticMaterial, kappa: float,
                     geometry: CutGeometry, refined: RefinedMesh) -> ShapeDerivative:
    """Coefficients of theta -> int_Omega E : grad theta with
    E = grad(u)^T sigma(u) + (kappa - W(u)) I and W = mu eps:eps + lambda/2 tr(eps)^2,
    over the P1/Q1 velocity basis of the refined mesh."""
    fine = refined.fine
    k = refined.k
    degree = 4 * k if fine.kind == QUADRILATERAL else 2 * k
    pts, w, fown = geometry.quadrature(degree)
    out = np.zeros((fine.n_vertices, 2))
    if len(w) == 0:
        return ShapeDerivative(out)
    mu, lam = material.mu, material.lam
    Du = u.gradient(pts, refined.parent[fown])
    eps = 0.5 * (Du + Du.transpose(0, 2, 1))
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    sigma = 2 * mu * eps + lam * tr[:, None, None] * np.eye(2)
    W = mu * np.einsum("qij,qij->q", eps, eps) + 0.5 * lam * tr**2
    E = np.einsum("qic,qij->qcj", Du, sigma) + (kappa - W)[:, None, None] * np.eye(2)
    G = eval_gradients(fine, 1, fown, pts)  # (q, a, j)
    contrib = np.einsum("q,qcj,qaj->qac", w, E, G)
    np.add.at(out, fine.nodes1[fown], contrib)
    return ShapeDerivative(out)


# --------------------------------------------------------------------------- velocity
@dataclass
class VelocityField:
    values: np.ndarray   # (n_fine_vertices, 2), b-normalized
    bnorm: float         # sqrt(b(beta', beta')) before normalization

    @property
    def max_speed(self) -> float:
        return float(np.linalg.norm(self.values, axis=1).max()) if len(self.values) else 0.0


def velocity_operator(refined: RefinedMesh, c1: float) -> sp.csr_matrix:
    space = scalar_space(refined.fine)
    return (space.mass + c1 * space.stiffness).tocsr()


def velocity(dJ: ShapeDerivative, c1: float, refined: RefinedMesh) -> VelocityField:
    """Solve b(beta', theta) = -dJ(theta), beta' . n = 0 on the outer boundary,
    and normalize to b(beta, beta) = 1."""
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    fine = refined.fine
    B = velocity_operator(refined, c1)
    fixed = fine.vertex_boundary_normals()
    beta = np.zeros((fine.n_vertices, 2))
    for c in (0, 1):
        free = np.nonzero(~fixed[:, c])[0]
        if len(free) == 0 or not np.any(dJ.values[free, c]):
            continue
        beta[free, c] = spla.spsolve(B[free][:, free].tocsc(), -dJ.values[free, c])
    b = float(sum(beta[:, c] @ (B @ beta[:, c]) for c in (0, 1)))
    if not b >= 1e-20:
        raise StationaryPoint(f"b(beta', beta') = {b:.3e}")
    nb = np.sqrt(b)
    return VelocityField(beta / nb, nb)


# --------------------------------------------------------------------------- transport
def convection_matrix(refined: RefinedMesh, beta: np.ndarray) -> sp.csr_matrix:
    """C_ij = (beta . grad psi_j, psi_i) with beta interpolated in P1/Q1."""
    fine = refined.fine
    space = scalar_space(fine)
    conn = space.conn
    ne, nloc = conn.shape
    mats = np.empty((ne, nloc, nloc))
    bvals = beta[conn]  # (e, a, 2)
    for shape, (pts, w, N, G, _, _) in space._ref.items():
        sel = fine.element_shape == shape
        bq = np.einsum("qc,ecd->eqd", N, bvals[sel])
        # h^2 (area scaling) / h (gradient scaling)
        mats[sel] = fine.h * np.einsum("q,qa,eqd,qbd->eab", w, N, bq, G)
    rows = np.repeat(conn, nloc, axis=1)
    cols = np.tile(conn, (1, nloc))
    return sp.coo_matrix((mats.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(space.n, space.n)).tocsr()


def jump_stabilization(refined: RefinedMesh, c2: float) -> sp.csr_matrix:
    """c2 h^2 sum_F ([d_n phi], [d_n v])_F over interior faces of the refined mesh."""
    fine = refined.fine
    cached = getattr(fine, "_jump_stab", None)
    if cached is not None and cached[0] == c2:
        return cached[1]
    faces = np.arange(fine.n_interior_faces)
    r, c, v = face_jump_triplets(fine, fine.nodes1, 1, faces, [(1, c2 * fine.h**2)], 3)
    S = sp.coo_matrix((v, (r, c)), shape=(fine.n_vertices,) * 2).tocsr()
    fine._jump_stab = (c2, S)
    return S


def transport(levelset: LevelSetField, beta: VelocityField | np.ndarray, T: float,
              c2: float = 0.1, substeps: int | None = None) -> LevelSetField:
    """Crank-Nicolson steps of d_t phi + beta . grad phi = 0 with jump stabilization."""
    refined = levelset.mesh
    values = beta.values if isinstance(beta, VelocityField) else np.asarray(beta, dtype=float)
    speed = float(np.linalg.norm(values, axis=1).max()) if len(values) else 0.0
    if T == 0.0 or speed == 0.0:
        return levelset.copy()
    h = refined.fine.h
    if substeps is None:
        substeps = max(1, int(np.ceil(abs(T) * speed / h)))
    dt = T / substeps
    M = scalar_space(refined.fine).mass
    L = convection_matrix(refined, values) + jump_stabilization(refined, c2)
    lhs = spla.splu((M + 0.5 * dt * L).tocsc())
    rhs = (M - 0.5 * dt * L).tocsr()
    phi = levelset.values.copy()
    for _ in range(substeps):
        phi = lhs.solve(rhs @ phi)
    return levelset.with_values(phi)


# --------------------------------------------------------------------------- topology
def _material_graph(levelset: LevelSetField, geometry: CutGeometry):
    fine = levelset.fine
    phi = levelset.values
    has = geometry.material_area > 0
    fe = fine.face_elements
    fv = fine.face_vertices
    edge_mat = np.maximum(phi[fv[:, 0]], phi[fv[:, 1]]) > 0
    link = has[fe[:, 0]] & has[fe[:, 1]] & edge_mat
    n = fine.n_elements
    g = sp.coo_matrix((np.ones(link.sum()), (fe[link, 0], fe[link, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    return has, labels


def material_components(levelset: LevelSetField, geometry: CutGeometry | None = None) -> int:
    """Number of connected components of the material domain."""
    geometry = geometry or extract_geometry(levelset)
    has, labels = _material_graph(levelset, geometry)
    return int(len(np.unique(labels[has])))


def void_components(levelset: LevelSetField, geometry: CutGeometry | None = None) -> int:
    """Number of connected components of the void part of the design domain."""
    geometry = geometry or extract_geometry(levelset)
    fine = levelset.fine
    phi = levelset.values
    void = geometry.material_area < fine.element_area * (1 - 1e-12)
    fe = fine.face_elements
    fv = fine.face_vertices
    edge_void = np.minimum(phi[fv[:, 0]], phi[fv[:, 1]]) < 0
    link = void[fe[:, 0]] & void[fe[:, 1]] & edge_void
    n = fine.n_elements
    g = sp.coo_matrix((np.ones(link.sum()), (fe[link, 0], fe[link, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    return int(len(np.unique(labels[void])))


@dataclass
class FilterResult:
    levelset: LevelSetField
    components: int     # material components before filtering
    removed: int        # components removed
    removed_area: float


def filter_disconnected(levelset: LevelSetField, spec: BoundarySpec,
                        geometry: CutGeometry | None = None) -> FilterResult:
    """Remove material components that do not touch the Dirichlet boundary."""
    geometry = geometry or extract_geometry(levelset)
    fine = levelset.fine
    has, labels = _material_graph(levelset, geometry)
    comps = np.unique(labels[has])
    pieces = boundary_pieces(fine, spec.dirichlet, levelset.values)
    anchors = set(labels[pieces.element[has[pieces.element]]].tolist())
    if spec.levelset_dirichlet:
        anchors = set(comps.tolist())
    if not anchors:
        raise DegenerateDomainError("no material component touches the Dirichlet boundary")
    drop = has & ~np.isin(labels, list(anchors))
    if not drop.any():
        return FilterResult(levelset, len(comps), 0, 0.0)
    keep_v = np.zeros(fine.n_vertices, dtype=bool)
    keep_v[fine.elements[has & ~drop]] = True
    drop_v = np.zeros(fine.n_vertices, dtype=bool)
    drop_v[fine.elements[drop]] = True
    drop_v &= ~keep_v
    phi = levelset.values.copy()
    phi[drop_v] = -np.maximum(np.abs(phi[drop_v]), 1e-10 * fine.h)
    removed = len(np.unique(labels[drop]))
    return FilterResult(levelset.with_values(phi), len(comps), removed,
                        float(geometry.material_area[drop].sum()))


def clamp_non_design(levelset: LevelSetField, segments: list[Segment], width: float) -> LevelSetField:
    """Keep material within ``width`` of the given boundary segments."""
    if not segments:
        return levelset
    x = levelset.fine.vertices
    phi = levelset.values.copy()
    for seg in segments:
        phi = np.maximum(phi, width - seg.distance(x))
    return levelset.with_values(phi)


# --------------------------------------------------------------------------- optimization
@dataclass
class OptimizationSettings:
    kappa: float = 35.0
    c1: float | None = None          # default 3 (h/k)^2
    c2: float = 0.1
    T0: float | None = None          # default 0.05 diam(Omega_0)
    T_min_factor: float = 1e-6
    max_iterations: int = 50
    substeps: int | None = None
    reinit_iters: int = 50
    reinit_tol: float = 1e-3
    filter: bool = True
    non_design_width: float | None = None  # default 2 h / k

    def resolved_c1(self, refined: RefinedMesh) -> float:
        return self.c1 if self.c1 is not None else 3.0 * refined.fine.h**2

    def resolved_T0(self, refined: RefinedMesh) -> float:
        if self.T0 is not None:
            return self.T0
        return 0.05 * refined.coarse.domain.diameter


@dataclass
class IterationRecord:
    iter: int
    t: float
    T: float
    J: float
    compliance: float
    volume: float
    accepted: bool
    components: int

    def row(self) -> list:
        nums = (self.t, self.T, self.J, self.compliance, self.volume)
        return [int(self.iter), *(repr(float(v)) for v in nums), int(self.accepted),
                int(self.components)]


@dataclass
class Evaluation:
    levelset: LevelSetField
    J: float
    compliance: float = np.inf
    volume: float = np.nan
    components: int = 0
    holes: int = 0
    system: LinearSystem | None = None
    u: DisplacementField | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return np.isfinite(self.J)


@dataclass
class OptimizationState:
    iteration: int = 0
    t: float = 0.0
    T: float = 0.0
    history: list = field(default_factory=list)
    status: str = "running"
    wall_time: float = 0.0

    def accepted_J(self) -> list[float]:
        return [r.J for r in self.history if r.accepted]


class ShapeOptimizer:
    """Algorithm: solve, differentiate, regularize, transport with a doubling /
    halving pseudo-time line search, reinitialize and filter."""

    def __init__(self, problem: ElasticityProblem, settings: OptimizationSettings | None = None):
        self.problem = problem
        self.settings = settings or OptimizationSettings()
        refined = problem.refined
        self.refined = refined
        self.c1 = self.settings.resolved_c1(refined)
        self.T0 = self.settings.resolved_T0(refined)
        width = self.settings.non_design_width
        self.strip_width = width if width is not None else 2.0 * refined.fine.h
        spec = problem.boundary
        self.non_design = list(spec.dirichlet) + [ld.segment for ld in spec.loads]

    # ---------------------------------------------------------------- pieces
    def prepare(self, levelset: LevelSetField, reinit: bool = True) -> tuple[LevelSetField, int]:
        """Clamp non-design strips, reinitialize, filter. Returns the level set
        and its material component count before filtering."""
        ls = clamp_non_design(levelset, self.non_design, self.strip_width)
        if reinit:
            v = ls.values
            if np.any(v > 0) and np.any(v < 0):
                ls = reinitialize(ls, self.settings.reinit_iters, self.settings.reinit_tol)
                ls = clamp_non_design(ls, self.non_design, self.strip_width)
        geometry = extract_geometry(ls)
        if not self.settings.filter:
            return ls, material_components(ls, geometry)
        res = filter_disconnected(ls, self.problem.boundary, geometry)
        return res.levelset, res.components

    def evaluate(self, levelset: LevelSetField, components: int = 0) -> Evaluation:
        try:
            geometry = extract_geometry(levelset)
            system = self.problem.assemble(levelset, geometry=geometry)
            u = solve(system)
            J, c, vol = objective(u, system, self.settings.kappa)
        except (LoadDetachedError, SingularMatrixError, DegenerateDomainError) as exc:
            log.info("trial rejected: %s", exc)
            return Evaluation(levelset, np.inf, error=str(exc), components=components)
        holes = void_components(levelset, geometry)
        return Evaluation(levelset, J, c, vol, components, holes, system, u)

    def descent(self, ev: Evaluation) -> VelocityField:
        dJ = shape_derivative(ev.u, self.problem.material, self.settings.kappa,
                              ev.system.geometry, self.refined)
        return velocity(dJ, self.c1, self.refined)

    def trial(self, levelset: LevelSetField, beta: VelocityField, T: float) -> Evaluation:
        moved = transport(levelset, beta, T, self.settings.c2, self.settings.substeps)
        try:
            ls, comps = self.prepare(moved)
        except DegenerateDomainError as exc:
            return Evaluation(moved, np.inf, error=str(exc))
        return self.evaluate(ls, comps)

    # ---------------------------------------------------------------- loop
    def run(self, levelset: LevelSetField,
            callback: Callable[[OptimizationState, Evaluation], None] | None = None):
        start = time.perf_counter()
        s = self.settings
        state = OptimizationState(T=self.T0)
        ls, comps = self.prepare(levelset, reinit=False)
        current = self.evaluate(ls, comps)
        if not current.ok:
            raise RuntimeError(f"initial design cannot be evaluated: {current.error}")
        state.history.append(IterationRecord(0, 0.0, state.T, current.J, current.compliance,
                                             current.volume, True, current.components))
        if callback:
            callback(state, current)
        T_min = s.T_min_factor * self.T0
        for it in range(1, s.max_iterations + 1):
            state.iteration = it
            try:
                beta = self.descent(current)
            except StationaryPoint:
                state.status = "stationary"
                break
            T = state.T
            while True:
                ev = self.trial(current.levelset, beta, T)
                accepted = ev.J < current.J
                t_new = state.t + T if accepted else state.t
                state.history.append(IterationRecord(it, t_new, T, ev.J, ev.compliance, ev.volume,
                                                     accepted, ev.components))
                if accepted:
                    state.t = t_new
                    state.T = 2.0 * T
                    current = ev
                    break
                T = 0.5 * T
                if T < T_min:
                    state.T = T
                    state.status = "converged"
                    break
            if callback:
                callback(state, current)
            log.info("iter %d: J = %.6g, T = %.3g", it, current.J, T)
            if state.status == "converged":
                break
        else:
            state.status = "max_iterations"
        state.wall_time = time.perf_counter() - start
        return current, state


def optimize(problem: ElasticityProblem, levelset: LevelSetField,
             settings: OptimizationSettings | None = None, callback=None):
    """Run the optimization; returns (final evaluation, state, history)."""
    final, state = ShapeOptimizer(problem, settings).run(levelset, callback)
    return final, state, state.history


__all__ = [
    "StationaryPoint", "ShapeDerivative", "shape_derivative", "VelocityField", "velocity",
    "transport", "convection_matrix", "jump_stabilization", "filter_disconnected", "FilterResult",
    "material_components", "void_components", "clamp_non_design", "OptimizationSettings",
    "IterationRecord", "Evaluation", "OptimizationState", "ShapeOptimizer", "optimize",
]
