"""Minimal sparse linear algebra: CSR storage and Jacobi-preconditioned
BiCGStab/CG. The advection matrices produced by the exponential-fitting
discretization are nonsymmetric M-matrices with strong diagonals, for which
this combination is adequate at the tolerances used here."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["CsrMatrix", "SolveReport", "matvec", "solve",
           "write_matrix_market", "read_matrix_market"]


@dataclass
class CsrMatrix:
    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.row_offsets) - 1

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = m.tocsr()
        m.sort_indices()
        m.sum_duplicates()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                   m.data.astype(float))

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.column_indices,
                              self.row_offsets), shape=(self.n, self.n))

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    method: str = ""


def matvec(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    if len(x) != A.n:
        raise ValueError("dimension mismatch")
    return A.to_scipy() @ x


def _is_symmetric(A: CsrMatrix) -> bool:
    m = A.to_scipy()
    if m.nnz == 0:
        return True
    d = abs(m - m.T)
    return d.max() <= 1e-12 * abs(m).max()


def _jacobi(A: CsrMatrix) -> np.ndarray:
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    return 1.0 / d


def solve(A: CsrMatrix, rhs: np.ndarray, rel_tol: float = 1e-10,
          max_iter: int | None = None, method: str = "auto",
          x0: np.ndarray | None = None):
    """Solve A x = rhs to a relative residual of ``rel_tol``.

    ``auto`` probes symmetry and picks CG or BiCGStab; both use Jacobi
    preconditioning. Returns (x, SolveReport); non-convergence is reported,
    not raised.
    """
    n = A.n
    if len(rhs) != n:
        raise ValueError("dimension mismatch")
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    if method == "auto":
        method = "cg" if _is_symmetric(A) else "bicgstab"

    m = A.to_scipy()
    inv_d = _jacobi(A)
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, method)
    x = np.zeros(n) if x0 is None else x0.astype(float).copy()

    if method == "cg":
        x, it, ok = _cg(m, rhs, x, inv_d, rel_tol * b_norm, max_iter)
    elif method == "bicgstab":
        x, it, ok = _bicgstab(m, rhs, x, inv_d, rel_tol * b_norm, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    res = np.linalg.norm(m @ x - rhs) / b_norm
    converged = ok and res <= rel_tol
    return x, SolveReport(it, res, converged, method)


def _cg(m, b, x, inv_d, atol, max_iter):
    r = b - m @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        if np.linalg.norm(r) <= atol:
            return x, it - 1, True
        Ap = m @ p
        pAp = p @ Ap
        if pAp == 0.0:
            return x, it - 1, False
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, np.linalg.norm(r) <= atol


def _bicgstab(m, b, x, inv_d, atol, max_iter):
    r = b - m @ x
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(r) <= atol:
            return x, it - 1, True
        rho_new = r0 @ r
        if rho_new == 0.0 or omega == 0.0:
            return x, it - 1, False
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        ph = inv_d * p
        v = m @ ph
        r0v = r0 @ v
        if r0v == 0.0:
            return x, it - 1, False
        alpha = rho / r0v
        s = r - alpha * v
        if np.linalg.norm(s) <= atol:
            return x + alpha * ph, it, True
        sh = inv_d * s
        t = m @ sh
        tt = t @ t
        if tt == 0.0:
            return x, it - 1, False
        omega = (t @ s) / tt
        x = x + alpha * ph + omega * sh
        r = s - omega * t
    return x, max_iter, np.linalg.norm(r) <= atol


def dense_lu_solve(A: CsrMatrix, rhs: np.ndarray) -> np.ndarray:
    """Dense LU oracle for small test systems only."""
    if A.n > 2000:
        raise ValueError("dense oracle limited to n <= 2000")
    return np.linalg.solve(A.to_scipy().toarray(), rhs)


def write_matrix_market(A: CsrMatrix, path) -> None:
    coo = A.to_scipy().tocoo()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n} {A.n} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_matrix_market(path) -> CsrMatrix:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("%")]
    nr, nc, nnz = (int(v) for v in lines[0].split())
    rows, cols, vals = [], [], []
    for ln in lines[1:1 + nnz]:
        i, j, v = ln.split()
        rows.append(int(i) - 1)
        cols.append(int(j) - 1)
        vals.append(float(v))
    return CsrMatrix.from_scipy(
        sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc)))
