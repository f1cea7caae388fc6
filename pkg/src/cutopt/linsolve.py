"""Sparse direct solves and condition estimates."""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SingularMatrixError(RuntimeError):
    def __init__(self, message: str, rank_deficiency: int | None = None):
        super().__init__(message)
        self.rank_deficiency = rank_deficiency


class ConditionEstimateUnavailable(RuntimeError):
    pass


def symmetry_error(A) -> float:
    """max |A - A^T| / max |A|."""
    A = sp.csr_matrix(A)
    d = abs(A - A.T)
    amax = abs(A).max()
    return float(d.max() / amax) if amax > 0 else 0.0


def _deficiency(U_diag: np.ndarray) -> int:
    # only exact breakdown counts; near-singularity is caught by the residual check
    scale = np.abs(U_diag).max() if len(U_diag) else 0.0
    return int(np.sum(~np.isfinite(U_diag) | (np.abs(U_diag) <= 1e-300 * max(scale, 1.0))))


class Factorization:
    """LU factors of a sparse square matrix; immutable once built."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A, dtype=float)
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"matrix must be square, got {self.A.shape}")
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed: {exc}") from exc
        diag = self.lu.U.diagonal()
        k = _deficiency(diag)
        if k:
            raise SingularMatrixError(
                f"matrix numerically singular: {k} negligible pivots "
                f"(smallest |pivot| {np.abs(diag).min():.3e})", rank_deficiency=k)

    def solve(self, b: np.ndarray, rtol: float = 1e-9, refine: int = 3) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b)
        bn = np.linalg.norm(b)
        for _ in range(refine):
            r = b - self.A @ x
            if np.linalg.norm(r) <= 1e-3 * rtol * bn:
                break
            x = x + self.lu.solve(r)
        res = np.linalg.norm(b - self.A @ x)
        if not np.all(np.isfinite(x)) or res > rtol * bn:
            raise SingularMatrixError(
                f"residual {res:.3e} exceeds {rtol:g} * |b| = {rtol * bn:.3e}")
        return x


def factor_solve(A, b: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Solve ``A x = b`` with a sparse LU factorization plus iterative refinement."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    return Factorization(A).solve(b, rtol=rtol)


def condition_estimate(A, dense_limit: int = 200, maxiter: int = 10_000) -> float:
    """2-norm condition number estimate lambda_max / lambda_min of a symmetric matrix."""
    A = sp.csc_matrix(A, dtype=float)
    n = A.shape[0]
    if n <= dense_limit:
        ev = np.abs(sla.eigvalsh(A.toarray()))
        if ev.min() == 0.0:
            return np.inf
        return float(ev.max() / ev.min())
    try:
        lmax = spla.eigsh(A, k=1, which="LM", return_eigenvectors=False, maxiter=maxiter)[0]
        lmin = spla.eigsh(A, k=1, sigma=0.0, which="LM", return_eigenvectors=False,
                          maxiter=maxiter)[0]
    except spla.ArpackNoConvergence as exc:
        raise ConditionEstimateUnavailable(str(exc)) from exc
    except RuntimeError as exc:  # singular shift-invert factorization
        log.debug("shift-invert failed: %s", exc)
        return np.inf
    if lmin == 0.0:
        return np.inf
    return float(abs(lmax) / abs(lmin))
