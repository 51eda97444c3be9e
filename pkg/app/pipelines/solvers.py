"""
Linear algebra kernels: Jacobi-preconditioned CG on lazily combined sparse
operators, dense Cholesky solves and the dense symmetric eigensolver.
"""
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import structlog

from app.config import get_settings
from app.core.exceptions import (
    EigenSolverError,
    InvalidParameterError,
    NonConvergenceError,
    NotSPDError,
    PreconditionerError,
)
from app.models.report import SolveReport

logger = structlog.get_logger()


@dataclass(frozen=True)
class LinearOperatorSpec:
    """Σ c_i M_i applied lazily; every M_i is a symmetric (n × n) sparse or dense matrix."""
    terms: Tuple[Tuple[float, object], ...]

    def __post_init__(self):
        if not self.terms:
            raise InvalidParameterError("operator needs at least one term")
        shapes = {m.shape for _, m in self.terms}
        if len(shapes) != 1:
            raise InvalidParameterError(f"operator terms have different shapes: {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise InvalidParameterError(f"operator terms must be square, got {shape}")

    @classmethod
    def of(cls, *terms) -> "LinearOperatorSpec":
        """LinearOperatorSpec.of(A) or LinearOperatorSpec.of((a, A), (b, M))."""
        if len(terms) == 1 and not isinstance(terms[0], tuple):
            return cls(((1.0, terms[0]),))
        return cls(tuple((float(c), m) for c, m in terms))

    @property
    def n(self) -> int:
        return self.terms[0][1].shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        for coef, matrix in self.terms:
            if coef != 0.0:
                out += coef * (matrix @ x)
        return out

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        for coef, matrix in self.terms:
            d += coef * (matrix.diagonal() if sp.issparse(matrix) else np.diag(matrix))
        return d

    def toarray(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        for coef, matrix in self.terms:
            dense += coef * (matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix))
        return dense


def _as_operator(op) -> LinearOperatorSpec:
    return op if isinstance(op, LinearOperatorSpec) else LinearOperatorSpec.of(op)


def cg_solve(op, b: np.ndarray, tol: Optional[float] = None, max_iter: Optional[int] = None,
             x0: Optional[np.ndarray] = None, method: str = "cg") -> Tuple[np.ndarray, SolveReport]:
    """
    Jacobi-preconditioned conjugate gradients for a symmetric positive definite operator.

    Stops when the recursively updated residual satisfies ‖r‖₂ ≤ tol·‖b‖₂.
    Deterministic: no randomness, fixed reduction order.
    """
    start = time.perf_counter()
    op = _as_operator(op)
    settings = get_settings().solver
    tol = settings.cg_tol if tol is None else tol
    n = op.n
    max_iter = settings.cg_max_iter_factor * n if max_iter is None else max_iter

    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise InvalidParameterError(f"right-hand side has shape {b.shape}, operator is {n}×{n}")
    if not np.all(np.isfinite(b)):
        raise InvalidParameterError("right-hand side is not finite")

    diag = op.diagonal()
    if np.any(diag <= 0.0):
        bad = int(np.flatnonzero(diag <= 0.0)[0])
        raise PreconditionerError(f"non-positive diagonal entry {diag[bad]:.3e} at row {bad}")
    inv_diag = 1.0 / diag

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(method=method, iterations=0, residual=0.0, tolerance=tol,
                                        wall_time=time.perf_counter() - start)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op.matvec(x) if x0 is not None else b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    threshold = tol * b_norm
    history: List[float] = [float(np.linalg.norm(r)) / b_norm]

    iterations = 0
    while history[-1] * b_norm > threshold:
        if iterations >= max_iter:
            raise NonConvergenceError(
                f"CG did not converge in {max_iter} iterations (relative residual {history[-1]:.3e})",
                iterations=iterations, residual=history[-1],
            )
        q = op.matvec(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise NotSPDError(f"operator is not positive definite (pᵀAp = {pq:.3e} at iteration {iterations})")
        step = rz / pq
        x += step * p
        r -= step * q
        z = inv_diag * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
        iterations += 1
        history.append(float(np.linalg.norm(r)) / b_norm)

    report = SolveReport(
        method=method,
        iterations=iterations,
        residual=history[-1],
        tolerance=tol,
        wall_time=time.perf_counter() - start,
        residual_history=history,
    )
    return x, report


def dense_cholesky_solve(matrix: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M x = b for symmetric positive definite dense M (b may hold several columns)."""
    try:
        factor = la.cho_factor(np.asarray(matrix, dtype=float), lower=True, check_finite=True)
    except la.LinAlgError as e:
        raise NotSPDError(f"matrix is not positive definite: {e}") from e
    return la.cho_solve(factor, np.asarray(b, dtype=float))


def dense_cholesky_factor(matrix: np.ndarray) -> np.ndarray:
    """Lower-triangular L with M = L Lᵀ."""
    try:
        return la.cholesky(np.asarray(matrix, dtype=float), lower=True)
    except la.LinAlgError as e:
        raise NotSPDError(f"matrix is not positive definite: {e}") from e


def dense_sym_eig(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {matrix.shape}")
    scale = max(np.abs(matrix).max(), np.finfo(float).tiny)
    if np.abs(matrix - matrix.T).max() > 1e-12 * scale:
        raise InvalidParameterError("matrix is not symmetric")
    try:
        values, vectors = la.eigh(0.5 * (matrix + matrix.T))
    except la.LinAlgError as e:
        raise EigenSolverError(f"symmetric eigensolver failed: {e}") from e
    return values, vectors


def is_symmetric(matrix, rtol: float = 0.0) -> bool:
    """Exact (rtol = 0) or relative symmetry check for sparse or dense matrices."""
    if sp.issparse(matrix):
        diff = (matrix - matrix.T).tocoo()
        if diff.nnz == 0:
            return True
        return float(np.abs(diff.data).max()) <= rtol * float(np.abs(matrix).max())
    matrix = np.asarray(matrix)
    return float(np.abs(matrix - matrix.T).max()) <= rtol * float(np.abs(matrix).max())


def inf_norm(matrix) -> float:
    """Max absolute row sum."""
    if sp.issparse(matrix):
        return float(np.abs(matrix).sum(axis=1).max())
    return float(np.abs(np.asarray(matrix)).sum(axis=1).max())
