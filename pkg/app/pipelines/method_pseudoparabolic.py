"""
Method II: pseudo-parabolic time stepping.

With D = S − δI (δ ≤ λ̃₁, so D ≥ 0) the Cauchy problem

    (t D + δ I) dw/dt + α D w = 0,   w(0) = δ^{-α} g,   0 < t ≤ 1

has w(1) = S^{-α} g. It is integrated with the two-level σ-weighted scheme.
States are carried as discrete-harmonic full-space fields; B = A − δ M_Γ is
the full-space realization of D and each step is one sparse SPD solve.
"""
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import structlog

from app.config import get_settings
from app.core.config_loader import get_inverse_iteration_config
from app.core.exceptions import ConfigurationError, InvalidParameterError, NotSPDError
from app.models.enums import MethodTag
from app.models.problem import TimeSchemeParams, check_delta
from app.models.report import SolveReport
from app.pipelines.solvers import LinearOperatorSpec, cg_solve, dense_cholesky_solve
from app.pipelines.steklov import (
    SteklovOperator,
    boundary_projection,
    harmonic_extension,
    smallest_eig_inverse_iteration,
)

logger = structlog.get_logger()

# Relative slack for the nonincreasing-norm check
NORM_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class TimeEvolutionState:
    n: int
    w: np.ndarray
    alpha: float
    delta: float
    norm_history: Tuple[float, ...] = ()
    harmonic_residuals: Tuple[float, ...] = ()
    iteration_counts: Tuple[int, ...] = field(default=())
    step_residuals: Tuple[float, ...] = ()

    @property
    def norm(self) -> float:
        return self.norm_history[-1]


def _check_time_inputs(alpha: float, delta: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1) for the time-stepping method, got {alpha}")
    if delta is None or delta <= 0.0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")


def initial_state(A, M_gamma, b_g: np.ndarray, delta: float, alpha: float,
                  op: Optional[SteklovOperator] = None) -> TimeEvolutionState:
    """w⁰ = δ^{-α} times the discrete harmonic extension of ĝ, where M_B ĝ = b_g|_Γ."""
    _check_time_inputs(alpha, delta)
    op = op or SteklovOperator.from_matrices(A, M_gamma)
    g_hat = boundary_projection(op, b_g)
    w = delta ** (-alpha) * harmonic_extension(op, g_hat)
    return TimeEvolutionState(
        n=0, w=w, alpha=alpha, delta=delta,
        norm_history=(op.boundary_norm(w),),
        harmonic_residuals=(op.interior_residual(w),),
    )


def _step_coefficients(n: int, params: TimeSchemeParams, alpha: float) -> Tuple[float, float]:
    """(t_σ/τ + ασ, t_σ/τ − α(1−σ)): the multipliers of B on the new and old levels."""
    ratio = params.t_sigma(n) / params.tau
    return ratio + alpha * params.sigma, ratio - alpha * (1.0 - params.sigma)


def step(state: TimeEvolutionState, params: TimeSchemeParams, A, M_gamma,
         op: Optional[SteklovOperator] = None, tol: Optional[float] = None,
         max_iter: Optional[int] = None) -> TimeEvolutionState:
    """
    One σ-step:
        [(t_σ/τ + ασ) B + (δ/τ) M_Γ] w^{n+1} = [(t_σ/τ − α(1−σ)) B + (δ/τ) M_Γ] w^n

    Interior rows of this system are multiples of (A w)_I, so discrete
    harmonicity carries over from w^n to w^{n+1}.
    """
    if state.n >= params.N:
        raise InvalidParameterError(f"state is already at the final step {params.N}")
    op = op or SteklovOperator.from_matrices(A, M_gamma)
    delta, alpha = state.delta, state.alpha
    new_coef, old_coef = _step_coefficients(state.n, params, alpha)
    mass_coef = delta / params.tau

    # aB + (δ/τ)M_Γ = aA + (δ/τ − aδ)M_Γ
    lhs = LinearOperatorSpec.of((new_coef, op.A), (mass_coef - new_coef * delta, op.M_gamma))
    rhs = old_coef * (op.A @ state.w) + (mass_coef - old_coef * delta) * (op.M_gamma @ state.w)

    try:
        w, report = cg_solve(lhs, rhs, tol=tol, max_iter=max_iter, x0=state.w,
                             method=f"method2[n={state.n}]")
    except NotSPDError as e:
        raise ConfigurationError(
            f"time-step operator is indefinite at step {state.n}: delta={delta:.6g} likely exceeds "
            "the smallest Steklov eigenvalue; choose a smaller delta"
        ) from e

    return replace(
        state,
        n=state.n + 1,
        w=w,
        norm_history=state.norm_history + (op.boundary_norm(w),),
        harmonic_residuals=state.harmonic_residuals + (op.interior_residual(w),),
        iteration_counts=state.iteration_counts + (report.iterations,),
        step_residuals=state.step_residuals + (report.residual,),
    )


def boundary_scheme_step(y_B: np.ndarray, S_B: np.ndarray, M_B: np.ndarray, n: int,
                         params: TimeSchemeParams, delta: float, alpha: float) -> np.ndarray:
    """The same σ-step applied to boundary vectors with dense S_B and M_B."""
    new_coef, old_coef = _step_coefficients(n, params, alpha)
    D = S_B - delta * M_B
    mass = (delta / params.tau) * M_B
    return dense_cholesky_solve(new_coef * D + mass, (old_coef * D + mass) @ y_B)


def count_norm_increases(norm_history, rtol: float = NORM_TOLERANCE) -> int:
    history = np.asarray(norm_history, dtype=float)
    if history.size < 2:
        return 0
    return int(np.sum(history[1:] > history[:-1] * (1.0 + rtol)))


def resolve_delta(op: SteklovOperator, delta: Optional[float]) -> Tuple[float, float]:
    """(δ, λ̃₁): δ defaults to delta_margin·λ̃₁; δ > λ̃₁ is a configuration error."""
    iteration = get_inverse_iteration_config()
    lambda1 = smallest_eig_inverse_iteration(op, tol=float(iteration['tol']), max_iter=int(iteration['max_iter']))
    return check_delta(delta, lambda1, get_settings().solver.delta_margin), lambda1


def solve_method2(A, M_gamma, b_g: np.ndarray, alpha: float, params: TimeSchemeParams,
                  delta: Optional[float] = None, tol: Optional[float] = None,
                  max_iter: Optional[int] = None) -> Tuple[np.ndarray, SolveReport]:
    """
    w^N ≈ w(1), a full-space discrete-harmonic field whose trace approximates S^{-α} g.

    δ is taken from the argument, else from params, else delta_margin·λ̃₁.
    The report carries the boundary-norm history, per-step interior
    residuals and whether the norm sequence is nonincreasing.
    """
    start = time.perf_counter()
    op = SteklovOperator.from_matrices(A, M_gamma)
    op.require_coercive()
    delta, lambda1 = resolve_delta(op, delta if delta is not None else params.delta)

    state = initial_state(op.A, op.M_gamma, b_g, delta, alpha, op=op)
    for _ in range(params.N):
        state = step(state, params, op.A, op.M_gamma, op=op, tol=tol, max_iter=max_iter)

    violations = count_norm_increases(state.norm_history)
    if violations:
        logger.warning("norm_not_monotone", violations=violations, sigma=params.sigma, N=params.N)

    report = SolveReport(
        method=MethodTag.METHOD2.value,
        iterations=sum(state.iteration_counts),
        residual=max(state.step_residuals, default=0.0),
        wall_time=time.perf_counter() - start,
        iteration_counts=list(state.iteration_counts),
        parameters={"alpha": alpha, "N": params.N, "sigma": params.sigma,
                    "delta": delta, "lambda1": lambda1},
        norm_history=list(state.norm_history),
        harmonic_residuals=list(state.harmonic_residuals),
        monotone=violations == 0,
        stability_violations=violations,
    )
    logger.info("method2_done", N=params.N, sigma=params.sigma, alpha=alpha, delta=round(delta, 6),
                iterations=report.iterations, monotone=report.monotone)
    return state.w, report
