import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutopt.basis import CORNERS, get_basis, lagrange_nodes
from cutopt.fem import eval_basis
from cutopt.mesh import (DesignDomain, MeshError, build_background_mesh, face_jump_orientation,
                         refine_uniform)


def test_unit_square_quads_counts():
    m = build_background_mesh(DesignDomain(1, 1), 0.5, "quad")
    assert (m.n_elements, m.n_vertices, m.n_interior_faces) == (4, 9, 4)


def test_unit_square_triangles_counts():
    # one fixed diagonal per cell: 4 grid faces + 4 diagonals
    m = build_background_mesh(DesignDomain(1, 1), 0.5, "triangle")
    assert (m.n_elements, m.n_vertices, m.n_interior_faces) == (8, 9, 8)
    assert len(m.bface_element) == 8


def test_cantilever_grid():
    m = build_background_mesh(DesignDomain(2, 1), 0.25, "quad")
    assert m.n_elements == 32
    assert (m.nx, m.ny) == (8, 4)


def test_lshape_mesh_excludes_void():
    dom = DesignDomain(2, 2, void=(1, 1, 2, 2))
    m = build_background_mesh(dom, 0.25, "quad")
    assert m.n_elements == 48
    assert np.isclose(m.element_areas().sum(), dom.area, rtol=1e-12)
    cent = m.vertices[m.elements].mean(axis=1)
    assert dom.contains(cent).all()


@pytest.mark.parametrize("h", [0.3, 0.15])
def test_indivisible_h_rejected(h):
    with pytest.raises(MeshError):
        build_background_mesh(DesignDomain(1, 1), h, "quad")


def test_unknown_kind_rejected():
    with pytest.raises(MeshError):
        build_background_mesh(DesignDomain(1, 1), 0.5, "hexagon")


@pytest.mark.parametrize("kind", ["quad", "triangle"])
def test_elements_counter_clockwise_and_tile(kind):
    m = build_background_mesh(DesignDomain(2, 1), 0.25, kind)
    p = m.vertices[m.elements]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * (np.sum(x * np.roll(y, -1, axis=1), axis=1) - np.sum(np.roll(x, -1, axis=1) * y, axis=1))
    assert np.all(area > 0)
    assert np.isclose(area.sum(), 2.0, rtol=1e-12)


@pytest.mark.parametrize("kind", ["quad", "triangle"])
def test_faces_shared_once(kind):
    m = build_background_mesh(DesignDomain(1, 1), 0.25, kind)
    edges = np.sort(np.concatenate([m.face_vertices, m.bface_vertices]), axis=1)
    assert len(np.unique(edges, axis=0)) == len(edges)
    # every element edge is an interior or boundary face
    nv = m.elements.shape[1]
    el_edges = np.sort(np.stack([m.elements, np.roll(m.elements, -1, axis=1)], axis=2).reshape(-1, 2), axis=1)
    assert set(map(tuple, el_edges)) == set(map(tuple, edges))
    counts = np.bincount(m.face_elements.ravel(), minlength=m.n_elements)
    counts += np.bincount(m.bface_element, minlength=m.n_elements)
    assert np.all(counts == nv)


def test_face_normal_points_out_of_k_plus():
    m = build_background_mesh(DesignDomain(1, 1), 0.25, "quad")
    for f in range(m.n_interior_faces):
        kp, km, n = face_jump_orientation(m, f)
        assert kp < km
        cp = m.vertices[m.elements[kp]].mean(axis=0)
        cm = m.vertices[m.elements[km]].mean(axis=0)
        assert np.dot(cm - cp, n) > 0
        assert np.isclose(np.linalg.norm(n), 1.0)


def test_vertical_face_normal():
    m = build_background_mesh(DesignDomain(1, 1), 0.5, "quad")
    vertical = [f for f in range(m.n_interior_faces)
                if np.allclose(m.vertices[m.face_vertices[f]][:, 0], 0.5)]
    assert vertical
    for f in vertical:
        kp, _, n = face_jump_orientation(m, f)
        assert m.vertices[m.elements[kp]][:, 0].max() <= 0.5
        assert np.allclose(n, [1, 0])


def test_boundary_face_rejected():
    m = build_background_mesh(DesignDomain(1, 1), 0.5, "quad")
    with pytest.raises(MeshError):
        face_jump_orientation(m, m.n_interior_faces)


def test_refine_k1_is_identity():
    m = build_background_mesh(DesignDomain(1, 1), 0.25, "triangle")
    r = refine_uniform(m, 1)
    assert np.array_equal(r.fine.vertices, m.vertices)
    assert np.array_equal(r.fine.elements, m.elements)
    assert np.array_equal(r.parent, np.arange(m.n_elements))


@pytest.mark.parametrize("kind,k,per", [("quad", 3, 9), ("triangle", 2, 4), ("triangle", 3, 9)])
def test_refinement_children(kind, k, per):
    m = build_background_mesh(DesignDomain(1, 1), 0.5, kind)
    r = refine_uniform(m, k)
    assert np.all(np.bincount(r.parent) == per)
    # children lie inside their parent
    fc = r.fine.vertices[r.fine.elements].mean(axis=1)
    parent_pts = m.vertices[m.elements[r.parent]]
    lo, hi = parent_pts.min(axis=1), parent_pts.max(axis=1)
    assert np.all((fc > lo) & (fc < hi))


@pytest.mark.parametrize("kind", ["quad", "triangle"])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_lagrange_nodes_map_to_fine_vertices(kind, k):
    m = build_background_mesh(DesignDomain(1, 1), 0.5, kind)
    r = refine_uniform(m, k)
    for e in range(m.n_elements):
        shape = m.element_shape[e]
        expect = m.element_origin[e] + m.h * lagrange_nodes(shape, k) / k
        got = r.fine.vertices[r.element_nodes[e]]
        assert np.allclose(got, expect, atol=1e-12 * m.h)
    assert len(np.unique(r.element_nodes)) == r.fine.n_vertices


@pytest.mark.parametrize("shape", [0, 1, 2])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_basis_is_nodal_and_partition_of_unity(shape, k):
    b = get_basis(shape, k)
    nodes = lagrange_nodes(shape, k) / k
    assert np.allclose(b(nodes), np.eye(len(nodes)), atol=1e-12)
    pts = CORNERS[shape].mean(axis=0)[None] * 0.9 + 0.01
    assert np.isclose(b(pts).sum(), 1.0)
    assert np.allclose(b.gradient(pts).sum(axis=1), 0.0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 3), a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2),
       kind=st.sampled_from(["quad", "triangle"]))
def test_basis_reproduces_polynomials(k, a, b, c, kind):
    m = build_background_mesh(DesignDomain(1, 1), 0.5, kind)
    r = refine_uniform(m, k)
    f = lambda x: a + b * x[:, 0] ** k + c * x[:, 0] * x[:, 1] ** (k - 1)  # noqa: E731
    coef = f(r.fine.vertices)
    el = np.arange(m.n_elements)
    loc = np.array([[0.6, 0.3] if s != 2 else [0.3, 0.6] for s in m.element_shape])
    pts = m.element_origin + m.h * loc
    N = eval_basis(m, k, el, pts)
    assert np.allclose(np.einsum("qa,qa->q", N, coef[r.element_nodes]), f(pts), atol=1e-10)


def test_element_areas_sum():
    dom = DesignDomain(2, 1)
    for kind in ("quad", "triangle"):
        m = build_background_mesh(dom, 0.125, kind)
        assert np.isclose(m.element_areas().sum(), dom.area, rtol=1e-12)


def test_locate_points():
    m = build_background_mesh(DesignDomain(1, 1), 0.25, "triangle")
    pts = np.array([[0.1, 0.05], [0.1, 0.2], [0.99, 0.99]])
    el = m.locate(pts)
    for p, e in zip(pts, el):
        v = m.vertices[m.elements[e]]
        assert v[:, 0].min() <= p[0] <= v[:, 0].max()
    assert m.locate(np.array([[2.0, 2.0]]))[0] == -1
