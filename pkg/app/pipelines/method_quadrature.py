"""
Method I: sinc quadrature of the integral representation

    S^{-α} = (2 sin(πα)/π) ∫_ℝ e^{2αs} (I + e^{2s} S)^{-1} ds

on the nodes s_m = mη, m = −M..M. Each node costs one shifted elliptic solve
(e^{2s_m} A + M_Γ) y_m = b_g on the full space; the boundary trace of
Σ γ_m y_m approximates S^{-α} g and its interior is discrete-harmonic.
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog

from app.config import get_settings
from app.core.exceptions import InvalidParameterError, NonConvergenceError
from app.models.enums import MethodTag
from app.models.report import SolveReport
from app.pipelines.solvers import LinearOperatorSpec, cg_solve
from app.pipelines.steklov import SteklovOperator

logger = structlog.get_logger()


@dataclass(frozen=True)
class QuadratureRule:
    M: int
    alpha: float
    eta: float

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1) * self.eta

    @cached_property
    def shifts(self) -> np.ndarray:
        """e^{2 s_m}, the multiplier of A at node m."""
        return np.exp(2.0 * self.nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        scale = 2.0 * self.eta * math.sin(math.pi * self.alpha) / math.pi
        return scale * np.exp(2.0 * self.alpha * self.nodes)

    @property
    def a(self) -> np.ndarray:
        """a_m of the per-term weak problem a_m a(y, v) + b_m ⟨y, v⟩_Γ = ⟨g, v⟩_Γ."""
        return self.shifts / self.weights

    @property
    def b(self) -> np.ndarray:
        return 1.0 / self.weights

    def __len__(self) -> int:
        return 2 * self.M + 1


def build_rule(M: int, alpha: float, eta: Optional[float] = None) -> QuadratureRule:
    """Rule with step η = M^{-1/2} unless overridden."""
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise InvalidParameterError(f"M must be an integer >= 1, got {M}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(
            f"alpha must lie in (0, 1) for the quadrature method, got {alpha}; "
            "use the dirichlet/neumann solvers for the limiting cases"
        )
    if eta is None:
        eta = 1.0 / math.sqrt(M)
    elif eta <= 0.0:
        raise InvalidParameterError(f"eta must be positive, got {eta}")
    return QuadratureRule(M=int(M), alpha=float(alpha), eta=float(eta))


def quadrature_scalar(rule: QuadratureRule, lam) -> np.ndarray:
    """The rule applied to scalar spectra: Σ_m γ_m / (1 + e^{2s_m} λ) ≈ λ^{-α}."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return np.array([
        math.fsum(rule.weights / (1.0 + rule.shifts * value)) for value in lam
    ])


def compensated_sum(terms: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise Neumaier summation of equally shaped arrays, in the given order."""
    total = np.zeros_like(terms[0], dtype=float)
    correction = np.zeros_like(total)
    for term in terms:
        t = total + term
        big = np.abs(total) >= np.abs(term)
        correction += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + correction


def solve_method1(A, M_gamma, b_g: np.ndarray, alpha: float, M: int,
                  tol: Optional[float] = None, max_iter: Optional[int] = None,
                  eta: Optional[float] = None,
                  threads: Optional[int] = None) -> Tuple[np.ndarray, SolveReport]:
    """
    Full-space field y_M = Σ_m γ_m y_m whose trace approximates S^{-α} g.

    The 2M+1 solves run on a thread pool over shared read-only matrices.
    Weighted terms are accumulated in the fixed order m = −M..M, so the result
    does not depend on the thread count. A failed node aborts the run with a
    NonConvergenceError carrying the node index m.
    """
    start = time.perf_counter()
    rule = build_rule(M, alpha, eta)
    op = SteklovOperator.from_matrices(A, M_gamma)
    op.require_coercive()
    b_g = np.asarray(b_g, dtype=float)
    if b_g.shape != (op.n,):
        raise InvalidParameterError(f"boundary load has shape {b_g.shape}, expected ({op.n},)")
    threads = threads or get_settings().solver.threads

    def solve_node(index: int):
        operator = LinearOperatorSpec.of((rule.shifts[index], op.A), (1.0, op.M_gamma))
        node = index - rule.M
        try:
            return cg_solve(operator, b_g, tol=tol, max_iter=max_iter, method=f"method1[m={node}]")
        except NonConvergenceError as e:
            raise NonConvergenceError(
                f"quadrature node m={node} (s={rule.nodes[index]:.4f}): {e}",
                iterations=e.iterations, residual=e.residual, node=node,
            ) from e

    with ThreadPoolExecutor(max_workers=min(threads, len(rule))) as executor:
        results = list(executor.map(solve_node, range(len(rule))))

    y = compensated_sum([w * x for w, (x, _) in zip(rule.weights, results)])
    report = SolveReport.combine(
        MethodTag.METHOD1.value,
        [r for _, r in results],
        wall_time=time.perf_counter() - start,
        parameters={"alpha": rule.alpha, "M": rule.M, "eta": rule.eta},
    )
    logger.info("method1_done", M=rule.M, alpha=rule.alpha, solves=len(rule),
                iterations=report.iterations, wall_time=round(report.wall_time, 3))
    return y, report
