"""matplotlib figures for run reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection, PolyCollection  # noqa: E402

from .levelset import INSIDE, CutGeometry  # noqa: E402


def plot_design(path, geometry: CutGeometry, title: str | None = None,
                von_mises: np.ndarray | None = None):
    """Material domain (clipped polygons), optionally coloured by fine-cell von Mises stress."""
    fine = geometry.fine
    full = np.nonzero(geometry.status == INSIDE)[0]
    polys = [fine.vertices[fine.elements[e]] for e in full] + list(geometry.polygons)
    owners = np.concatenate([full, geometry.polygon_element]).astype(int)
    lo = fine.vertices.min(axis=0)
    hi = fine.vertices.max(axis=0)
    width = 8.0
    fig, ax = plt.subplots(figsize=(width, width * (hi[1] - lo[1]) / (hi[0] - lo[0]) + 0.8))
    if von_mises is not None:
        coll = PolyCollection(polys, array=np.nan_to_num(von_mises[owners]), cmap="viridis",
                              edgecolors="none")
        ax.add_collection(coll)
        fig.colorbar(coll, ax=ax, label="von Mises stress [Pa]", shrink=0.8)
    else:
        ax.add_collection(PolyCollection(polys, facecolors="0.35", edgecolors="none"))
    segs = np.stack([geometry.seg_p0, geometry.seg_p1], axis=1)
    ax.add_collection(LineCollection(segs, colors="k", linewidths=0.8))
    ax.plot([lo[0], hi[0], hi[0], lo[0], lo[0]], [lo[1], lo[1], hi[1], hi[1], lo[1]],
            color="0.6", lw=0.5)
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(path, history):
    """Objective, compliance and volume of accepted iterations."""
    acc = [r for r in history if r.accepted]
    it = [r.iter for r in acc]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].plot(it, [r.J for r in acc], "o-", ms=3)
    axes[0].set_ylabel("J")
    axes[1].semilogy(it, [r.compliance for r in acc], "o-", ms=3)
    axes[1].set_ylabel("compliance")
    axes[2].plot(it, [r.volume for r in acc], "o-", ms=3)
    axes[2].set_ylabel("|Omega|")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
