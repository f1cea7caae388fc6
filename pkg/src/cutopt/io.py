"""File output: legacy VTK snapshots, SVG outlines and the iteration log."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .levelset import CutGeometry
from .mesh import QUADRILATERAL, StructuredMesh

CSV_HEADER = ["iter", "t", "T", "J", "compliance", "volume", "accepted", "components"]
_VTK_CELL = {QUADRILATERAL: 9, "triangle": 5}


def _vtk_grid(fh, mesh: StructuredMesh, title: str):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {mesh.n_vertices} double\n")
    for x, y in mesh.vertices:
        fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
    ne, nv = mesh.elements.shape
    fh.write(f"CELLS {ne} {ne * (nv + 1)}\n")
    for el in mesh.elements:
        fh.write(f"{nv} " + " ".join(map(str, el)) + "\n")
    fh.write(f"CELL_TYPES {ne}\n")
    fh.write(f"{_VTK_CELL[mesh.kind]}\n" * ne)


def write_mesh_vtk(path, mesh: StructuredMesh):
    with open(path, "w") as fh:
        _vtk_grid(fh, mesh, "background mesh")


def write_snapshot_vtk(path, fine: StructuredMesh, phi: np.ndarray,
                       displacement: np.ndarray | None = None,
                       von_mises: np.ndarray | None = None):
    """Level set (and optionally displacement and cell von Mises stress) on the refined mesh."""
    with open(path, "w") as fh:
        _vtk_grid(fh, fine, "level set snapshot")
        fh.write(f"POINT_DATA {fine.n_vertices}\nSCALARS phi double 1\nLOOKUP_TABLE default\n")
        fh.write("".join(f"{float(v)!r}\n" for v in phi))
        if displacement is not None:
            fh.write("VECTORS displacement double\n")
            fh.write("".join(f"{float(a)!r} {float(b)!r} 0.0\n" for a, b in displacement))
        if von_mises is not None:
            fh.write(f"CELL_DATA {fine.n_elements}\nSCALARS von_mises double 1\n"
                     "LOOKUP_TABLE default\n")
            vm = np.nan_to_num(von_mises, nan=0.0)
            fh.write("".join(f"{float(v)!r}\n" for v in vm))


def write_svg(path, geometry: CutGeometry, mesh: StructuredMesh, scale: float = 400.0):
    """Background grid plus the extracted boundary segments."""
    verts = mesh.vertices
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    pad = 10.0
    w, h = (hi - lo) * scale + 2 * pad

    def tx(p):
        return pad + (p[..., 0] - lo[0]) * scale, pad + (hi[1] - p[..., 1]) * scale

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
             f'viewBox="0 0 {w:.1f} {h:.1f}">',
             '<rect width="100%" height="100%" fill="white"/>',
             '<g stroke="#cccccc" stroke-width="0.5" fill="none">']
    edges = np.concatenate([mesh.face_vertices, mesh.bface_vertices])
    x0, y0 = tx(verts[edges[:, 0]])
    x1, y1 = tx(verts[edges[:, 1]])
    for a, b, c, d in zip(x0, y0, x1, y1):
        lines.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{d:.2f}"/>')
    lines.append("</g>")
    lines.append('<g stroke="black" stroke-width="1.5" fill="none">')
    x0, y0 = tx(geometry.seg_p0)
    x1, y1 = tx(geometry.seg_p1)
    for a, b, c, d in zip(x0, y0, x1, y1):
        lines.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{d:.2f}"/>')
    lines.append("</g></svg>")
    Path(path).write_text("\n".join(lines) + "\n")


class IterationLog:
    """Append-only CSV log, flushed after every row so a crash keeps the history."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_HEADER)
        self._fh.flush()

    def write(self, record):
        self._writer.writerow(record.row())
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({"iter": int(r["iter"]), "t": float(r["t"]), "T": float(r["T"]),
                    "J": float(r["J"]), "compliance": float(r["compliance"]),
                    "volume": float(r["volume"]), "accepted": r["accepted"] == "1",
                    "components": int(r["components"])})
    return out
