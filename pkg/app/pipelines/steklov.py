"""
Discrete Dirichlet-to-Neumann (Steklov) operator.

S is defined on boundary traces by ⟨S y, v⟩_Γ = a(y, v) for discrete-harmonic y;
as a matrix it is the boundary Schur complement S_B = A_BB − A_BI A_II⁻¹ A_IB,
paired with the boundary mass matrix M_B.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import structlog

from app.config import get_settings
from app.core.exceptions import (
    ConfigurationError,
    EigenSolverError,
    InvalidParameterError,
    NonConvergenceError,
    NotSPDError,
    OracleSizeError,
)
from app.models.mesh import Mesh
from app.models.problem import Coefficients
from app.pipelines.assembly import assemble_bilinear, assemble_boundary_mass
from app.pipelines.solvers import cg_solve, dense_cholesky_factor, dense_sym_eig, inf_norm

logger = structlog.get_logger()


@dataclass(frozen=True, eq=False)
class SteklovOperator:
    """A and M_Γ with the interior/boundary partition; all blocks are derived lazily and cached."""
    A: sp.csr_matrix
    M_gamma: sp.csr_matrix
    boundary_nodes: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.M_gamma.shape != (n, n):
            raise InvalidParameterError(
                f"A is {self.A.shape}, M_gamma is {self.M_gamma.shape}; both must be square and equal"
            )
        nodes = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        if nodes.size == 0:
            raise InvalidParameterError("operator needs at least one boundary node")
        object.__setattr__(self, "A", sp.csr_matrix(self.A))
        object.__setattr__(self, "M_gamma", sp.csr_matrix(self.M_gamma))
        object.__setattr__(self, "boundary_nodes", nodes)

    @classmethod
    def from_matrices(cls, A, M_gamma, boundary_nodes: Optional[np.ndarray] = None) -> "SteklovOperator":
        """Boundary nodes default to the rows of M_Γ with a positive diagonal."""
        M_gamma = sp.csr_matrix(M_gamma)
        if boundary_nodes is None:
            boundary_nodes = np.flatnonzero(M_gamma.diagonal() > 0.0)
        return cls(sp.csr_matrix(A), M_gamma, boundary_nodes)

    @classmethod
    def from_mesh(cls, mesh: Mesh, coeff: Coefficients) -> "SteklovOperator":
        return cls(assemble_bilinear(mesh, coeff), assemble_boundary_mass(mesh), mesh.boundary_nodes)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_nodes.shape[0])

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @cached_property
    def A_II(self) -> sp.csc_matrix:
        return self.A[self.interior_nodes][:, self.interior_nodes].tocsc()

    @cached_property
    def A_IB(self) -> sp.csr_matrix:
        return self.A[self.interior_nodes][:, self.boundary_nodes]

    @cached_property
    def A_BI(self) -> sp.csr_matrix:
        return self.A[self.boundary_nodes][:, self.interior_nodes]

    @cached_property
    def A_BB(self) -> sp.csr_matrix:
        return self.A[self.boundary_nodes][:, self.boundary_nodes]

    @cached_property
    def M_B(self) -> np.ndarray:
        return self.M_gamma[self.boundary_nodes][:, self.boundary_nodes].toarray()

    @cached_property
    def M_B_factor(self) -> np.ndarray:
        try:
            return dense_cholesky_factor(self.M_B)
        except NotSPDError as e:
            raise EigenSolverError("boundary mass matrix is not positive definite; boundary extraction is broken") from e

    @cached_property
    def interior_lu(self) -> Optional[spla.SuperLU]:
        if self.interior_nodes.size == 0:
            return None
        return spla.splu(self.A_II)

    @cached_property
    def A_norm(self) -> float:
        return inf_norm(self.A)

    def require_coercive(self) -> None:
        """A must be positive definite on the whole space (c > 0 somewhere); c ≡ 0 leaves constants in its kernel."""
        ones = np.ones(self.n)
        if np.linalg.norm(self.A @ ones) <= 1e-12 * self.A_norm * np.sqrt(self.n):
            raise ConfigurationError(
                "bilinear form annihilates constants (c ≡ 0): the Steklov operator is singular; use c0 > 0"
            )

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        if self.interior_lu is None:
            return np.zeros((0,) + np.shape(rhs)[1:])
        return self.interior_lu.solve(np.asarray(rhs, dtype=float))

    def interior_residual(self, u: np.ndarray) -> float:
        """‖(A u)_I‖_∞ / (‖A‖_∞ ‖u‖_∞); zero for a discrete-harmonic field."""
        if self.interior_nodes.size == 0:
            return 0.0
        u_max = float(np.abs(u).max())
        if u_max == 0.0:
            return 0.0
        residual = (self.A @ u)[self.interior_nodes]
        return float(np.abs(residual).max()) / (self.A_norm * u_max)

    def boundary_norm(self, u: np.ndarray) -> float:
        """‖u‖_Γ = (uᵀ M_Γ u)^{1/2}"""
        return float(np.sqrt(max(u @ (self.M_gamma @ u), 0.0)))


@dataclass(frozen=True, eq=False)
class EigenPairSet:
    """Generalized Steklov eigenpairs S_B ψ = λ M_B ψ, ascending, ψ M_B-orthonormal (columns)."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=float)
        vectors = np.asarray(self.eigenvectors, dtype=float)
        if vectors.shape != (values.shape[0], values.shape[0]):
            raise InvalidParameterError(f"eigenvector matrix {vectors.shape} does not match {values.shape[0]} eigenvalues")
        if np.any(np.diff(values) < 0):
            raise EigenSolverError("eigenvalues are not ascending")
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "eigenvectors", vectors)

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def __len__(self) -> int:
        return int(self.eigenvalues.shape[0])


def schur_complement(op: SteklovOperator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Dense S_B = A_BB − A_BI A_II⁻¹ A_IB and M_B.

    The interior block is factorized once and solved for all N_Γ columns.
    Gated to oracle scale (solver settings, 512 boundary nodes by default).
    """
    limit = get_settings().solver.oracle_max_boundary_nodes
    if op.n_boundary > limit:
        raise OracleSizeError(f"{op.n_boundary} boundary nodes exceed the dense oracle limit of {limit}")

    S = op.A_BB.toarray()
    if op.interior_nodes.size:
        X = op.solve_interior(op.A_IB.toarray())
        S = S - op.A_BI @ X
    S = 0.5 * (S + S.T)
    logger.debug("schur_complement_formed", boundary_nodes=op.n_boundary, interior_nodes=int(op.interior_nodes.size))
    return S, op.M_B.copy()


def steklov_eigs(S_B: np.ndarray, M_B: np.ndarray) -> EigenPairSet:
    """
    Solve S_B ψ = λ M_B ψ by Cholesky reduction M_B = L Lᵀ and a symmetric
    eigensolve of L⁻¹ S_B L⁻ᵀ; eigenvectors come back M_B-orthonormal.
    """
    S_B = np.atleast_2d(np.asarray(S_B, dtype=float))
    M_B = np.atleast_2d(np.asarray(M_B, dtype=float))
    try:
        L = dense_cholesky_factor(M_B)
    except NotSPDError as e:
        raise EigenSolverError("boundary mass matrix is not positive definite") from e

    Y = la.solve_triangular(L, S_B, lower=True)
    C = la.solve_triangular(L, Y.T, lower=True).T
    values, V = dense_sym_eig(0.5 * (C + C.T))
    psi = la.solve_triangular(L.T, V, lower=False)
    return EigenPairSet(values, psi)


def steklov_eigs_for(op: SteklovOperator) -> EigenPairSet:
    """Dense eigen-decomposition of the discrete Steklov operator of `op`."""
    op.require_coercive()
    eigs = steklov_eigs(*schur_complement(op))
    if eigs.lambda1 <= 0.0:
        raise EigenSolverError(f"smallest Steklov eigenvalue is not positive ({eigs.lambda1:.3e})")
    return eigs


def smallest_eig_inverse_iteration(op: SteklovOperator, tol: float = 1e-12, max_iter: int = 500,
                                   x0: Optional[np.ndarray] = None) -> float:
    """
    λ̃₁ by inverse iteration x ← A⁻¹ M_Γ x on the full space.

    Iterates are normalized in the M_Γ-seminorm; the Rayleigh quotient
    a(x, x)/⟨x, x⟩_Γ is returned once successive quotients agree to `tol`
    (relative). A start vector with zero boundary trace is replaced by the
    boundary indicator.
    """
    op.require_coercive()
    x = np.ones(op.n) if x0 is None else np.array(x0, dtype=float)
    if op.boundary_norm(x) == 0.0:
        logger.debug("inverse_iteration_restart", reason="start vector has zero boundary trace")
        x = np.zeros(op.n)
        x[op.boundary_nodes] = 1.0
    x /= op.boundary_norm(x)

    previous = None
    for iteration in range(1, max_iter + 1):
        y, _ = cg_solve(op.A, op.M_gamma @ x, method="inverse_iteration")
        x = y / op.boundary_norm(y)
        quotient = float(x @ (op.A @ x)) / float(x @ (op.M_gamma @ x))
        if previous is not None and abs(quotient - previous) <= tol * abs(quotient):
            logger.debug("inverse_iteration_converged", iterations=iteration, lambda1=quotient)
            return quotient
        previous = quotient

    raise NonConvergenceError(
        f"inverse iteration did not converge in {max_iter} iterations",
        iterations=max_iter, residual=abs(quotient - previous) / abs(quotient) if previous else float("nan"),
    )


def _check_alpha(alpha: float, allow_one: bool = True) -> None:
    upper_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (alpha > 0.0 and upper_ok):
        raise InvalidParameterError(f"alpha must lie in (0, 1], got {alpha}")


def spectral_fractional_solve(eigs: EigenPairSet, b_B: np.ndarray, alpha: float) -> np.ndarray:
    """
    Boundary trace y_B = Σ_j λ̃_j^{−α} (ψ̃_jᵀ b_B) ψ̃_j of the solution of S^α y = g.

    b_B is the boundary restriction of the load ⟨g, χ_i⟩_Γ. α = 1 is allowed
    (plain Neumann problem) for validation.
    """
    _check_alpha(alpha)
    b_B = np.asarray(b_B, dtype=float)
    if b_B.shape != (len(eigs),):
        raise InvalidParameterError(f"boundary load has shape {b_B.shape}, expected ({len(eigs)},)")
    psi = eigs.eigenvectors
    coefficients = (psi.T @ b_B) * eigs.eigenvalues ** (-alpha)
    return psi @ coefficients


def spectral_apply(eigs: EigenPairSet, y_B: np.ndarray, M_B: np.ndarray, power: float) -> np.ndarray:
    """
    Boundary load of S^power y: M_B Σ_j λ̃_j^power ⟨y, ψ̃_j⟩_Γ ψ̃_j.

    Inverse of spectral_fractional_solve for power = α.
    """
    psi = eigs.eigenvectors
    coefficients = (psi.T @ (M_B @ y_B)) * eigs.eigenvalues ** power
    return M_B @ (psi @ coefficients)


def boundary_projection(op: SteklovOperator, b_g: np.ndarray) -> np.ndarray:
    """Nodal boundary values ĝ of the L²(Γ)-projection: M_B ĝ = b_g|_Γ."""
    b_B = np.asarray(b_g, dtype=float)[op.boundary_nodes]
    return la.cho_solve((op.M_B_factor, True), b_B)


def apriori_bound(eigs: EigenPairSet, b_B: np.ndarray, M_B: np.ndarray, alpha: float) -> Tuple[float, float]:
    """(‖y‖_{M_B}, λ̃₁^{−α} ‖ĝ‖_{M_B}) for the spectral solution y of S^α y = g, with M_B ĝ = b_B."""
    y_B = spectral_fractional_solve(eigs, b_B, alpha)
    g_hat = la.cho_solve((dense_cholesky_factor(M_B), True), b_B)
    y_norm = float(np.sqrt(y_B @ M_B @ y_B))
    g_norm = float(np.sqrt(g_hat @ M_B @ g_hat))
    return y_norm, eigs.lambda1 ** (-alpha) * g_norm


def harmonic_extension(op: SteklovOperator, y_B: np.ndarray) -> np.ndarray:
    """Full field u with trace y_B and (A u)_I = 0: A_II u_I = −A_IB y_B."""
    y_B = np.asarray(y_B, dtype=float)
    if y_B.shape != (op.n_boundary,):
        raise InvalidParameterError(f"boundary values have shape {y_B.shape}, expected ({op.n_boundary},)")
    u = np.zeros(op.n)
    u[op.boundary_nodes] = y_B
    if op.interior_nodes.size:
        u[op.interior_nodes] = op.solve_interior(-(op.A_IB @ y_B))
    return u
