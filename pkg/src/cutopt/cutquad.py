"""Quadrature on clipped polygons, boundary segments and mesh faces.

Polygons are fan-triangulated from their vertex centroid and each
sub-triangle receives a collapsed (Duffy) Gauss-Legendre rule, which is
exact for any requested total degree. Weights are signed areas, so the
decomposition stays exact for polynomials even for a non-convex simple
polygon.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass
class QuadratureRule:
    points: np.ndarray   # (n, 2), physical coordinates
    weights: np.ndarray  # (n,), area or length

    def integrate(self, f) -> float:
        if len(self.weights) == 0:
            return 0.0
        return float(np.dot(self.weights, f(self.points)))

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    Returns barycentric-style weights ``lam`` (nq, 3) such that a point is
    ``lam @ vertices``, and weights summing to 1 (multiply by the area).
    """
    n = max(1, (degree + 3) // 2)
    u, wu = gauss_legendre(n)
    v, wv = gauss_legendre(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    lam = np.stack([1.0 - x - y, x, y], axis=1)
    return lam, 2.0 * W.ravel()


@lru_cache(maxsize=None)
def square_rule(n: int):
    """Tensor Gauss rule on the unit square: points (n*n, 2), weights sum 1."""
    x, w = gauss_legendre(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1), np.outer(w, w).ravel()


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def fan_triangles(poly: np.ndarray) -> np.ndarray:
    """Triangles (m, 3, 2) fanning ``poly`` from its vertex centroid."""
    poly = np.asarray(poly, dtype=float)
    c = poly.mean(axis=0)
    nxt = np.roll(poly, -1, axis=0)
    return np.stack([np.broadcast_to(c, poly.shape), poly, nxt], axis=1)


def map_triangles(tris: np.ndarray, degree: int):
    """Apply ``triangle_rule(degree)`` to many triangles.

    Returns points (m, nq, 2) and signed weights (m, nq).
    """
    lam, w = triangle_rule(degree)
    pts = np.einsum("qi,mid->mqd", lam, tris)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * w[None, :]


def volume_rule(region: np.ndarray, degree: int, h: float | None = None) -> QuadratureRule:
    """Rule over a polygon (vertex list, counter-clockwise)."""
    poly = np.asarray(region, dtype=float)
    if len(poly) < 3:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0))
    scale = h if h is not None else np.ptp(poly, axis=0).max()
    if abs(signed_area(poly)) <= 1e-14 * scale**2:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0))
    pts, w = map_triangles(fan_triangles(poly), degree)
    return QuadratureRule(pts.reshape(-1, 2), w.reshape(-1))


def line_points(p0: np.ndarray, p1: np.ndarray, degree: int):
    """Rule on many segments: points (m, nq, 2), weights (m, nq)."""
    n = max(1, (degree + 2) // 2)
    t, w = gauss_legendre(n)
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    length = np.linalg.norm(p1 - p0, axis=1)
    return pts, length[:, None] * w[None, :]


def line_rule(segment, degree: int) -> QuadratureRule:
    p0, p1 = (np.asarray(p, dtype=float) for p in segment)
    if np.linalg.norm(p1 - p0) == 0.0:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0))
    pts, w = line_points(p0, p1, degree)
    return QuadratureRule(pts[0], w[0])


def face_rule(mesh, face_id: int, degree: int) -> QuadratureRule:
    """Rule over an entire interior face of ``mesh``."""
    a, b = mesh.face_vertices[face_id]
    return line_rule((mesh.vertices[a], mesh.vertices[b]), degree)


def element_rule(shape: int, degree: int):
    """Reference rule over a full cell shape in local coordinates.

    Returns local points (nq, 2) and weights summing to the local area.
    """
    from .basis import CORNERS, QUAD

    if shape == QUAD:
        return square_rule(max(1, (degree + 2) // 2))
    tri = CORNERS[shape][None]
    pts, w = map_triangles(tri, degree)
    return pts[0], w[0]
