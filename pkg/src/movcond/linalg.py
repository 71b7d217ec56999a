"""Sparse direct solves and 1-norm condition estimation.

Factorization is delegated to SuperLU (``scipy.sparse.linalg.splu``), which
applies a COLAMD column ordering and partial row pivoting. The condition
estimator is the Hager-Higham iteration driven by solves with the factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

EPS = np.finfo(float).eps


class SingularMatrixError(ArithmeticError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR copy: float64, sorted unique column indices, no NaN."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix holds non-finite entries")
    return A


def check_csr(A: sp.csr_matrix) -> None:
    """Raise ``ValueError`` unless ``A`` satisfies the CSR storage invariants."""
    if not sp.isspmatrix_csr(A):
        raise ValueError("expected a CSR matrix")
    ptr, idx = A.indptr, A.indices
    if ptr[0] != 0 or ptr[-1] != len(idx) or np.any(np.diff(ptr) < 0):
        raise ValueError("row pointers are not monotone")
    for r in range(A.shape[0]):
        cols = idx[ptr[r]:ptr[r + 1]]
        if np.any(np.diff(cols) <= 0):
            raise ValueError(f"row {r} column indices not sorted and unique")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix holds non-finite entries")


def norm1(A) -> float:
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0
    return float(np.abs(A).sum(axis=0).max())


@dataclass(frozen=True, eq=False)
class Factorization:
    """``Pr A Pc = L U`` with ``Pr`` from partial pivoting, ``Pc`` from COLAMD."""

    lu: spla.SuperLU
    shape: tuple[int, int]
    anorm: float

    @property
    def L(self) -> sp.csc_matrix:
        return self.lu.L

    @property
    def U(self) -> sp.csc_matrix:
        return self.lu.U

    @property
    def perm_r(self) -> np.ndarray:
        return self.lu.perm_r

    @property
    def perm_c(self) -> np.ndarray:
        return self.lu.perm_c

    def permuted(self, A) -> sp.csr_matrix:
        """``Pr A Pc`` in the ordering of the factors."""
        A = sp.csr_matrix(A)
        n = self.shape[0]
        Pr = sp.csr_matrix((np.ones(n), (self.perm_r, np.arange(n))), shape=(n, n))
        Pc = sp.csr_matrix((np.ones(n), (np.arange(n), self.perm_c)), shape=(n, n))
        return Pr @ A @ Pc

    def reconstruction_error(self, A) -> float:
        """``||Pr A Pc - L U||_1 / ||A||_1``."""
        diff = self.permuted(A) - self.L @ self.U
        return norm1(diff) / self.anorm


def factorize(A, pivot_tol: float = EPS) -> Factorization:
    """LU-factorize a square sparse matrix.

    A pivot smaller than ``pivot_tol * ||A||_1`` is treated as singular and
    reported with its position in the factored ordering.
    """
    A = sp.csc_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    anorm = norm1(A)
    if anorm == 0.0:
        raise SingularMatrixError("zero matrix", pivot=0)
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
        k = _dense_singular_pivot(A, pivot_tol * anorm)
        where = f" at pivot {k}" if k is not None else ""
        raise SingularMatrixError(f"matrix is singular{where}: {exc}", pivot=k) from exc
    piv = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(piv <= pivot_tol * anorm)
    if bad.size:
        k = int(bad[0])
        raise SingularMatrixError(
            f"pivot {k} is {piv[k]:.3e} (threshold {pivot_tol * anorm:.3e})", pivot=k
        )
    return Factorization(lu, A.shape, anorm)


def _dense_singular_pivot(A, tol: float, max_n: int = 4000) -> int | None:
    """First vanishing pivot of a dense partial-pivoting LU (small matrices only).

    SuperLU does not pass the failing column through scipy.
    """
    if A.shape[0] > max_n:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
    bad = np.flatnonzero(np.abs(np.diag(lu)) <= tol)
    return int(bad[0]) if bad.size else None


def solve(F: Factorization, b, trans: bool = False) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix size {F.shape[0]}")
    if not np.any(b):
        return np.zeros_like(b)
    return F.lu.solve(np.ascontiguousarray(b), trans="T" if trans else "N")


def residual_inf(A, x, b) -> float:
    """``||A x - b||_inf / ||b||_inf`` (0 for a zero rhs solved exactly)."""
    r = A @ x - b
    bn = np.abs(b).max()
    return float(np.abs(r).max() / bn) if bn else float(np.abs(r).max())


def inverse_norm1_estimate(F: Factorization, max_iter: int = 5) -> float:
    """Hager-Higham lower bound on ``||A^-1||_1``."""
    n = F.shape[0]
    if n == 1:
        return float(abs(solve(F, np.ones(1))[0]))
    x = np.full(n, 1.0 / n)
    est = 0.0
    last_j = -1
    for it in range(max_iter):
        y = solve(F, x)
        new = np.abs(y).sum()
        if it > 0 and new <= est:
            break
        est = new
        xi = np.where(y >= 0, 1.0, -1.0)
        z = solve(F, xi, trans=True)
        j = int(np.argmax(np.abs(z)))
        if it > 0 and (abs(z[j]) <= z @ x or j == last_j):
            break
        x = np.zeros(n)
        x[j] = 1.0
        last_j = j
    # alternating test vector guards against the failure cases of the iteration
    alt = (-1.0) ** np.arange(n) * (1.0 + np.arange(n) / (n - 1))
    est_alt = 2.0 * np.abs(solve(F, alt)).sum() / (3.0 * n)
    return float(max(est, est_alt))


def condition_estimate_1norm(A, F: Factorization | None = None) -> float:
    """``||A||_1`` times the Hager-Higham estimate of ``||A^-1||_1``."""
    if F is None:
        F = factorize(A)
    return norm1(A) * inverse_norm1_estimate(F)


def equilibrate(A) -> tuple[np.ndarray, np.ndarray, sp.csr_matrix]:
    """Row then column max-norm scaling, ``R A C`` with unit largest entries.

    Returns ``(r, c, R A C)``; rows or columns that are entirely zero keep
    a unit scale.
    """
    A = sp.csr_matrix(A, dtype=float)
    rmax = abs(A).max(axis=1).toarray().ravel()
    r = 1.0 / np.where(rmax > 0, rmax, 1.0)
    Ar = sp.diags(r) @ A
    cmax = abs(Ar).max(axis=0).toarray().ravel()
    c = 1.0 / np.where(cmax > 0, cmax, 1.0)
    return r, c, sp.csr_matrix(Ar @ sp.diags(c))


def write_matrix_market(A, path: str | Path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real")
