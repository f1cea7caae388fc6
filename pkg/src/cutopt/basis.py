"""Lagrange shape functions on the reference cell shapes of a structured grid.

Every element of a structured grid is a translate of one of three reference
shapes living in the unit cell ``[0, 1]^2`` (local coordinates ``xi, eta``):

* ``QUAD``  -- the whole cell, tensor-product space Q_k,
* ``LOWER`` -- triangle (0,0), (1,0), (1,1), full polynomial space P_k,
* ``UPPER`` -- triangle (0,0), (1,1), (0,1), full polynomial space P_k.

Physical coordinates are ``x = x0 + h * xi`` so a derivative of order ``m``
picks up a factor ``h**-m``.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

QUAD, LOWER, UPPER = 0, 1, 2
SHAPE_NAMES = {QUAD: "quad", LOWER: "lower", UPPER: "upper"}

# corner vertices of each reference shape, counter-clockwise
CORNERS = {
    QUAD: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    LOWER: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
    UPPER: np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
}


def lagrange_nodes(shape: int, k: int) -> np.ndarray:
    """Integer lattice positions ``(a, b)`` of the equispaced P_k/Q_k nodes.

    Node ``(a, b)`` sits at local coordinates ``(a / k, b / k)``.
    """
    if shape == QUAD:
        pts = [(a, b) for b in range(k + 1) for a in range(k + 1)]
    elif shape == LOWER:
        pts = [(a, b) for b in range(k + 1) for a in range(b, k + 1)]
    elif shape == UPPER:
        pts = [(a, b) for b in range(k + 1) for a in range(0, b + 1)]
    else:
        raise ValueError(f"unknown shape {shape}")
    return np.array(pts, dtype=np.int64)


def _exponents(shape: int, k: int) -> np.ndarray:
    if shape == QUAD:
        return np.array([(p, q) for q in range(k + 1) for p in range(k + 1)], dtype=np.int64)
    return np.array([(p, q) for q in range(k + 1) for p in range(k + 1 - q)], dtype=np.int64)


def _monomials(xi: np.ndarray, exps: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Matrix of ``d^dx/dxi^dx d^dy/deta^dy  xi^p eta^q`` at points ``xi``."""
    xi = np.atleast_2d(xi)
    p = exps[:, 0]
    q = exps[:, 1]
    cx = np.ones(len(exps))
    cy = np.ones(len(exps))
    for r in range(dx):
        cx = cx * (p - r)
    for r in range(dy):
        cy = cy * (q - r)
    pe = np.clip(p - dx, 0, None)
    qe = np.clip(q - dy, 0, None)
    vals = (xi[:, :1] ** pe[None, :]) * (xi[:, 1:2] ** qe[None, :])
    return vals * (cx * cy)[None, :]


class LagrangeBasis:
    """Nodal basis of degree ``k`` on one reference shape."""

    def __init__(self, shape: int, k: int):
        if k < 1:
            raise ValueError("polynomial degree must be >= 1")
        self.shape = shape
        self.k = k
        self.lattice = lagrange_nodes(shape, k)
        self.nodes = self.lattice / k
        self.exponents = _exponents(shape, k)
        vander = _monomials(self.nodes, self.exponents, 0, 0)
        self.coeffs = np.linalg.inv(vander)
        self.n = len(self.nodes)

    def __call__(self, xi: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Local derivative ``(dx, dy)`` of every basis function, shape (npts, n)."""
        return _monomials(np.asarray(xi, dtype=float), self.exponents, dx, dy) @ self.coeffs

    def gradient(self, xi: np.ndarray, h: float = 1.0) -> np.ndarray:
        """Physical gradients, shape (npts, n, 2)."""
        return np.stack([self(xi, 1, 0), self(xi, 0, 1)], axis=-1) / h

    def normal_derivative(self, xi: np.ndarray, normal, order: int, h: float = 1.0) -> np.ndarray:
        """``order``-th derivative along ``normal`` (one vector, or one per point)."""
        normal = np.asarray(normal, dtype=float)
        if normal.ndim == 1:
            normal = np.broadcast_to(normal, (np.atleast_2d(xi).shape[0], 2))
        out = 0.0
        for r in range(order + 1):
            weight = comb(order, r) * normal[:, 0] ** r * normal[:, 1] ** (order - r)
            out = out + weight[:, None] * self(xi, r, order - r)
        return out / h**order


@lru_cache(maxsize=None)
def get_basis(shape: int, k: int) -> LagrangeBasis:
    return LagrangeBasis(shape, k)
