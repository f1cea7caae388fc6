"""Boundary data on the outer boundary of the design domain.

Dirichlet and loaded Neumann regions are straight segments lying on the
boundary of the design domain. The free boundary created by the level set
is homogeneous Neumann unless ``levelset_dirichlet`` is set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Segment:
    p0: tuple[float, float]
    p1: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        a = np.asarray(self.p0, dtype=float)
        b = np.asarray(self.p1, dtype=float)
        d = b - a
        t = np.clip(((pts - a) @ d) / (d @ d), 0.0, 1.0)
        return np.linalg.norm(pts - (a + t[:, None] * d), axis=1)


@dataclass(frozen=True)
class Load:
    segment: Segment
    traction: tuple[float, float]  # N/m


@dataclass
class BoundarySpec:
    dirichlet: list[Segment] = field(default_factory=list)
    loads: list[Load] = field(default_factory=list)
    # prescribed displacement on Gamma_D, maps (n, 2) points -> (n, 2); None means zero
    dirichlet_value: Callable[[np.ndarray], np.ndarray] | None = None
    levelset_dirichlet: bool = False


@dataclass
class BoundaryPieces:
    """Sub-segments of fine boundary edges, one row per piece."""

    p0: np.ndarray        # (m, 2)
    p1: np.ndarray        # (m, 2)
    normal: np.ndarray    # (m, 2) outward
    element: np.ndarray   # (m,) fine element id
    tag: np.ndarray       # (m,) index of the spec segment / load

    def __len__(self):
        return len(self.element)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.p1 - self.p0, axis=1)

    @classmethod
    def empty(cls):
        z2 = np.zeros((0, 2))
        zi = np.zeros(0, dtype=np.int64)
        return cls(z2, z2.copy(), z2.copy(), zi, zi.copy())


def boundary_pieces(fine, segments: list[Segment], phi: np.ndarray | None = None,
                    tol: float = 1e-9) -> BoundaryPieces:
    """Overlap of the fine boundary edges with ``segments``.

    With ``phi`` the pieces are further restricted to ``phi >= 0`` using the
    linear trace of the level set along each edge.
    """
    if not segments:
        return BoundaryPieces.empty()
    verts = fine.bface_vertices
    xa = fine.vertices[verts[:, 0]]
    xb = fine.vertices[verts[:, 1]]
    scale = fine.h
    out = []
    for tag, seg in enumerate(segments):
        s0 = np.asarray(seg.p0, dtype=float)
        d = np.asarray(seg.p1, dtype=float) - s0
        dd = d @ d
        cross_a = (xa - s0) @ np.array([-d[1], d[0]]) / np.sqrt(dd)
        cross_b = (xb - s0) @ np.array([-d[1], d[0]]) / np.sqrt(dd)
        on_line = (np.abs(cross_a) < tol * scale) & (np.abs(cross_b) < tol * scale)
        ta = (xa - s0) @ d / dd
        tb = (xb - s0) @ d / dd
        lo = np.maximum(np.minimum(ta, tb), 0.0)
        hi = np.minimum(np.maximum(ta, tb), 1.0)
        keep = on_line & (hi - lo > tol * scale / np.sqrt(dd))
        idx = np.nonzero(keep)[0]
        if len(idx) == 0:
            continue
        # express the overlap in edge parameter s in [0, 1] (x = xa + s (xb - xa))
        span = tb[idx] - ta[idx]
        s_lo = (lo[idx] - ta[idx]) / span
        s_hi = (hi[idx] - ta[idx]) / span
        s0e = np.minimum(s_lo, s_hi)
        s1e = np.maximum(s_lo, s_hi)
        if phi is not None:
            fa = phi[verts[idx, 0]]
            fb = phi[verts[idx, 1]]
            both_in = (fa >= 0) & (fb >= 0)
            both_out = (fa < 0) & (fb < 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                sc = np.where(fa != fb, fa / (fa - fb), 0.0)
            # portion with phi >= 0 along the edge
            in_lo = np.where(both_in, 0.0, np.where(fa >= 0, 0.0, sc))
            in_hi = np.where(both_in, 1.0, np.where(fa >= 0, sc, 1.0))
            s0e = np.maximum(s0e, in_lo)
            s1e = np.minimum(s1e, in_hi)
            valid = ~both_out & (s1e - s0e > tol)
            idx, s0e, s1e = idx[valid], s0e[valid], s1e[valid]
        e = xb[idx] - xa[idx]
        out.append((xa[idx] + s0e[:, None] * e, xa[idx] + s1e[:, None] * e,
                    fine.bface_normals[idx], fine.bface_element[idx],
                    np.full(len(idx), tag, dtype=np.int64)))
    if not out:
        return BoundaryPieces.empty()
    return BoundaryPieces(*(np.concatenate(c) for c in zip(*out)))
