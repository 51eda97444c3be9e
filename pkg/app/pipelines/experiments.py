"""
Experiment drivers: problem setup, limiting-case solvers, error metrics,
reference solutions and convergence sweeps.
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from threading import Lock
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, Field, field_validator

from app.config import get_settings
from app.core.config_loader import get_sweep_config, get_table_config
from app.core.exceptions import (
    InvalidParameterError,
    MeshMismatchError,
    SolverError,
)
from app.models.enums import FRACTIONAL_METHODS, MethodTag, ReferenceKind
from app.models.mesh import Mesh, NodalField
from app.models.problem import Coefficients, FractionalProblem, ScalarField, TimeSchemeParams
from app.models.report import ErrorRecord, SolveReport
from app.pipelines.assembly import (
    assemble_bilinear,
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_mass,
)
from app.pipelines.method_pseudoparabolic import solve_method2
from app.pipelines.method_quadrature import solve_method1
from app.pipelines.mesh_generator import named_grid
from app.pipelines.solvers import cg_solve
from app.pipelines.steklov import (
    EigenPairSet,
    SteklovOperator,
    boundary_projection,
    harmonic_extension,
    spectral_fractional_solve,
    steklov_eigs_for,
)

logger = structlog.get_logger()


@dataclass(eq=False)
class ProblemSetup:
    """Assembled matrices of one (mesh, k, c0, g) problem; eigenpairs are computed on first use."""
    mesh: Mesh
    coeff: Coefficients
    c0: float
    A: object = field(init=False)
    M_gamma: object = field(init=False)
    b_g: np.ndarray = field(init=False)
    _lock: Lock = field(init=False, repr=False, default_factory=Lock)

    def __post_init__(self):
        self.A = assemble_bilinear(self.mesh, self.coeff)
        self.M_gamma = assemble_boundary_mass(self.mesh)
        self.b_g = assemble_boundary_load(self.mesh, self.coeff.g)

    @classmethod
    def build(cls, mesh: Mesh, c0: float, k: float = 1.0,
              g: Union[ScalarField, np.ndarray, NodalField] = 1.0) -> "ProblemSetup":
        coeff = Coefficients(k=k, c=c0, g=g.values if isinstance(g, NodalField) else g)
        return cls(mesh=mesh, coeff=coeff, c0=float(c0))

    @classmethod
    def from_problem(cls, mesh: Mesh, problem: FractionalProblem,
                     g: Union[ScalarField, np.ndarray, NodalField, None] = None) -> "ProblemSetup":
        """Setup of a FractionalProblem; `g` overrides its constant datum (e.g. a nodal file)."""
        return cls.build(mesh, problem.c0, k=problem.k, g=problem.g if g is None else g)

    @cached_property
    def M_omega(self):
        return assemble_mass(self.mesh)

    @cached_property
    def op(self) -> SteklovOperator:
        return SteklovOperator(self.A, self.M_gamma, self.mesh.boundary_nodes)

    @property
    def eigs(self) -> EigenPairSet:
        # Shared by concurrent sweep points; the dense solve runs once.
        with self._lock:
            if "_eigs" not in self.__dict__:
                self.__dict__["_eigs"] = steklov_eigs_for(self.op)
            return self.__dict__["_eigs"]

    def as_field(self, values: np.ndarray, name: str = "u") -> NodalField:
        return NodalField(values, self.mesh, name=name)


def solve_dirichlet(setup: ProblemSetup) -> NodalField:
    """α = 0: u = ĝ on Γ (M_B-projection of g) and (A u)_I = 0."""
    g_hat = boundary_projection(setup.op, setup.b_g)
    return setup.as_field(harmonic_extension(setup.op, g_hat), name="dirichlet")


def solve_neumann(setup: ProblemSetup, tol: Optional[float] = None) -> Tuple[NodalField, SolveReport]:
    """α = 1: a(u, v) = ⟨g, v⟩_Γ, one CG solve with A."""
    setup.op.require_coercive()
    u, report = cg_solve(setup.A, setup.b_g, tol=tol, method=MethodTag.NEUMANN.value)
    return setup.as_field(u, name="neumann"), report


def solve_spectral(setup: ProblemSetup, alpha: float) -> NodalField:
    """Dense-oracle solution: spectral trace S^{-α} g, harmonically extended."""
    y_B = spectral_fractional_solve(setup.eigs, setup.b_g[setup.op.boundary_nodes], alpha)
    return setup.as_field(harmonic_extension(setup.op, y_B), name="spectral")


def run_method(setup: ProblemSetup, method: Union[MethodTag, str], alpha: float,
               M: Optional[int] = None, N: Optional[int] = None, sigma: float = 0.5,
               delta: Optional[float] = None, eta: Optional[float] = None,
               tol: Optional[float] = None, max_iter: Optional[int] = None) -> Tuple[NodalField, SolveReport]:
    """Solve with any method tag; limiting methods ignore alpha."""
    method = MethodTag(method)
    start = time.perf_counter()

    if method == MethodTag.METHOD1:
        if M is None:
            raise InvalidParameterError("method1 needs M")
        y, report = solve_method1(setup.A, setup.M_gamma, setup.b_g, alpha, M,
                                  tol=tol, max_iter=max_iter, eta=eta)
    elif method == MethodTag.METHOD2:
        if N is None:
            raise InvalidParameterError("method2 needs N")
        params = TimeSchemeParams(N=N, sigma=sigma, delta=delta)
        y, report = solve_method2(setup.A, setup.M_gamma, setup.b_g, alpha, params,
                                  tol=tol, max_iter=max_iter)
    elif method == MethodTag.SPECTRAL:
        field_ = solve_spectral(setup, alpha)
        return field_, SolveReport(method=method.value, wall_time=time.perf_counter() - start,
                                   parameters={"alpha": alpha, "lambda1": setup.eigs.lambda1})
    elif method == MethodTag.NEUMANN:
        return solve_neumann(setup, tol=tol)
    else:
        field_ = solve_dirichlet(setup)
        return field_, SolveReport(method=method.value, wall_time=time.perf_counter() - start)

    return setup.as_field(y, name=method.value), report


def solve_problem(setup: ProblemSetup, problem: FractionalProblem, method: Union[MethodTag, str],
                  **options) -> Tuple[NodalField, SolveReport]:
    """
    Solve a FractionalProblem with Method I, Method II or the spectral oracle.

    The setup must have been assembled for the problem's c₀ and k; the
    problem's δ, when set, goes to Method II and is checked against λ̃₁ there.
    """
    method = MethodTag(method)
    if method not in FRACTIONAL_METHODS:
        raise InvalidParameterError(f"{method.value} does not solve a fractional problem")
    k = setup.coeff.k
    if not math.isclose(setup.c0, problem.c0) or (not callable(k) and not math.isclose(float(k), problem.k)):
        raise InvalidParameterError(
            f"setup was assembled for c0={setup.c0:g}, k={k}; the problem has c0={problem.c0:g}, k={problem.k:g}"
        )
    if problem.delta is not None:
        options.setdefault("delta", problem.delta)
    return run_method(setup, method, problem.alpha, **options)


def compute_errors(y: NodalField, y_ref: NodalField, M_gamma, M_omega, method: str = "",
                   alpha: float = 0.0, c0: float = 0.0, param: Optional[int] = None,
                   sigma: Optional[float] = None, ref: str = "") -> ErrorRecord:
    """
    e_∞ = max|y − y_ref| / max|y_ref| over all nodes;
    e₂ in the M_Γ and Ω-mass norms, both relative to y_ref.
    """
    if y.mesh is not y_ref.mesh and y.mesh != y_ref.mesh:
        raise MeshMismatchError("solution and reference live on different meshes")
    n = y.values.shape[0]
    if M_gamma.shape != (n, n) or M_omega.shape != (n, n):
        raise MeshMismatchError(f"mass matrices do not match {n} nodes")

    diff = y.values - y_ref.values
    ref_max = float(np.abs(y_ref.values).max())
    ref_gamma = float(y_ref.values @ (M_gamma @ y_ref.values))
    ref_omega = float(y_ref.values @ (M_omega @ y_ref.values))
    if ref_max == 0.0 or ref_gamma <= 0.0 or ref_omega <= 0.0:
        raise InvalidParameterError("reference solution is zero; relative errors are undefined")

    return ErrorRecord(
        method=method,
        alpha=alpha,
        c0=c0,
        param=param,
        sigma=sigma,
        mesh_id=y.mesh.label,
        e_inf=float(np.abs(diff).max()) / ref_max,
        e2_gamma=math.sqrt(max(float(diff @ (M_gamma @ diff)), 0.0) / ref_gamma),
        e2_omega=math.sqrt(max(float(diff @ (M_omega @ diff)), 0.0) / ref_omega),
        ref=ref,
    )


def field_extrema(y: NodalField) -> Tuple[float, float]:
    return y.min(), y.max()


def solution_extrema(setup: ProblemSetup, alpha: float, method: Union[MethodTag, str] = MethodTag.SPECTRAL,
                     **method_options) -> Tuple[float, float]:
    """Extrema of the solution for α ∈ [0, 1]; α = 0 and α = 1 go to the limiting solvers."""
    if alpha == 0.0:
        return field_extrema(solve_dirichlet(setup))
    if alpha == 1.0:
        return field_extrema(solve_neumann(setup)[0])
    y, _ = run_method(setup, method, alpha, **method_options)
    return field_extrema(y)


# ============================================================
# Convergence sweeps
# ============================================================

class SweepGrid(BaseModel):
    """Parameter grid of a convergence study."""
    methods: List[MethodTag] = Field(default_factory=lambda: [MethodTag.METHOD1, MethodTag.METHOD2])
    params: List[int] = Field(default_factory=lambda: [5, 10, 20, 40, 80, 160])
    alphas: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    c0s: List[float] = Field(default_factory=lambda: [5.0])
    sigma: float = Field(default=0.5, gt=0, le=1)
    grid: str = "coarse"
    reference: ReferenceKind = ReferenceKind.SPECTRAL
    reference_param: Optional[int] = Field(default=None, ge=1)
    k: float = Field(default=1.0, gt=0)
    threads: Optional[int] = Field(default=None, ge=1)

    @field_validator("methods")
    @classmethod
    def swept_methods_only(cls, v: List[MethodTag]) -> List[MethodTag]:
        unsupported = [m.value for m in v if m not in (MethodTag.METHOD1, MethodTag.METHOD2)]
        if unsupported:
            raise ValueError(f"only method1 and method2 have a convergence parameter, got {unsupported}")
        return v

    @classmethod
    def from_table(cls, table: Union[int, str], **overrides) -> "SweepGrid":
        """Grid of one of the configured tables (`1`: vary α, `2`: vary c₀)."""
        spec = get_table_config(table)
        sweep = get_sweep_config()
        values = {
            "params": list(sweep['params']),
            "alphas": [float(a) for a in spec['alpha']],
            "c0s": [float(c) for c in spec['c0']],
            "grid": sweep.get('grid', 'coarse'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class _Point:
    method: MethodTag
    alpha: float
    c0: float
    param: int


def _method_options(method: MethodTag, param: int, sigma: float) -> dict:
    return {"M": param} if method == MethodTag.METHOD1 else {"N": param, "sigma": sigma}


def _use_oracle(grid: SweepGrid, mesh: Mesh) -> bool:
    return (grid.reference == ReferenceKind.SPECTRAL
            and mesh.num_boundary_nodes <= get_settings().solver.oracle_max_boundary_nodes)


def _finest_reference(setup: ProblemSetup, grid: SweepGrid, method: MethodTag, alpha: float) -> Tuple[NodalField, str]:
    """Run of the same method at reference_param (default: twice the largest swept parameter)."""
    param = grid.reference_param or 2 * max(grid.params)
    y, _ = run_method(setup, method, alpha, **_method_options(method, param, grid.sigma))
    return y, f"{method.value}:{setup.mesh.label}:c0={setup.c0:g}:alpha={alpha:g}:param={param}"


def _run_point(point: _Point, setup: ProblemSetup, reference: Tuple[NodalField, str], grid: SweepGrid) -> ErrorRecord:
    sigma = grid.sigma if point.method == MethodTag.METHOD2 else None
    y_ref, ref_id = reference
    try:
        problem = FractionalProblem(alpha=point.alpha, c0=point.c0, k=grid.k)
        y, report = solve_problem(setup, problem, point.method,
                                  **_method_options(point.method, point.param, grid.sigma))
        record = compute_errors(y, y_ref, setup.M_gamma, setup.M_omega, method=point.method.value,
                                alpha=point.alpha, c0=point.c0, param=point.param, sigma=sigma, ref=ref_id)
        return record.model_copy(update={"monotone": report.monotone})
    except (SolverError, ValueError) as e:
        logger.error("sweep_point_failed", method=point.method.value, alpha=point.alpha,
                     c0=point.c0, param=point.param, error=str(e))
        return ErrorRecord(method=point.method.value, alpha=point.alpha, c0=point.c0, param=point.param,
                           sigma=sigma, mesh_id=setup.mesh.label, ref=ref_id,
                           failure=f"{type(e).__name__}: {e}")


def convergence_sweep(grid: SweepGrid, mesh: Optional[Mesh] = None) -> List[ErrorRecord]:
    """
    Errors of every (method, α, c₀, M|N) point against a reference.

    Points run on a thread pool; a failed point becomes a record with
    `failure` set and the sweep continues. Records come back sorted by
    (method, α, c₀, parameter) regardless of completion order.
    """
    start = time.perf_counter()
    mesh = mesh or named_grid(grid.grid)
    setups = {c0: ProblemSetup.build(mesh, c0, k=grid.k) for c0 in grid.c0s}

    oracle = _use_oracle(grid, mesh)
    if not oracle:
        logger.info("sweep_reference_fallback", boundary_nodes=mesh.num_boundary_nodes,
                    reference_param=grid.reference_param or 2 * max(grid.params))

    references: Dict[Tuple[MethodTag, float, float], Tuple[NodalField, str]] = {}
    for c0, setup in setups.items():
        # Prime the cached operator pieces before worker threads share them
        setup.op.require_coercive()
        setup.M_omega
        for alpha in grid.alphas:
            if oracle:
                ref = (solve_spectral(setup, alpha), f"spectral:{mesh.label}:c0={c0:g}:alpha={alpha:g}")
                references.update({(method, alpha, c0): ref for method in grid.methods})
            else:
                for method in grid.methods:
                    references[(method, alpha, c0)] = _finest_reference(setup, grid, method, alpha)

    points = [
        _Point(method, alpha, c0, param)
        for method in grid.methods for alpha in grid.alphas for c0 in grid.c0s for param in grid.params
    ]
    threads = grid.threads or get_settings().solver.threads
    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(points)))) as executor:
        records = list(executor.map(
            lambda p: _run_point(p, setups[p.c0], references[(p.method, p.alpha, p.c0)], grid), points
        ))

    records.sort(key=ErrorRecord.sort_key)
    failures = sum(r.failed for r in records)
    logger.info("convergence_sweep_done", points=len(records), failures=failures,
                mesh=mesh.label, wall_time=round(time.perf_counter() - start, 2))
    return records


def _records_frame(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in records if not r.failed])


def tabulate(records: Sequence[ErrorRecord], vary: str = "alpha",
             metrics: Sequence[str] = ("e_inf", "e2_gamma")) -> pd.DataFrame:
    """
    Pivot records into the table layout: rows (param, metric), columns (method, vary)
    where `vary` is "alpha" or "c0".
    """
    if vary not in ("alpha", "c0"):
        raise InvalidParameterError(f"tables vary 'alpha' or 'c0', got '{vary}'")
    df = _records_frame(records)
    if df.empty:
        return pd.DataFrame()
    long = df.melt(id_vars=["method", "alpha", "c0", "param"], value_vars=list(metrics),
                   var_name="metric", value_name="error")
    return long.pivot_table(index=["param", "metric"], columns=["method", vary], values="error", aggfunc="first")


def observed_orders(records: Sequence[ErrorRecord], metric: str = "e2_gamma") -> pd.DataFrame:
    """log₂(e(p)/e(2p)) for every parameter p whose double is also in the sweep."""
    df = _records_frame(records)
    columns = ["method", "alpha", "c0", "sigma", "param", "order"]
    if df.empty:
        return pd.DataFrame(columns=columns)

    rows = []
    for key, group in df.groupby(["method", "alpha", "c0"], sort=True, dropna=False):
        errors = dict(zip(group["param"].astype(int), group[metric]))
        sigma = group["sigma"].iloc[0]
        for param in sorted(errors):
            if 2 * param in errors and errors[param] > 0 and errors[2 * param] > 0:
                rows.append((*key, sigma, param, math.log2(errors[param] / errors[2 * param])))
    return pd.DataFrame(rows, columns=columns)


def mean_order(orders: pd.DataFrame, method: str, alpha: float, c0: float,
               params: Sequence[int] = (20, 40, 80)) -> float:
    """Average observed order over the given starting parameters."""
    mask = (orders["method"] == method) & np.isclose(orders["alpha"], alpha) & np.isclose(orders["c0"], c0)
    selected = orders[mask & orders["param"].isin(list(params))]
    if selected.empty:
        raise InvalidParameterError(f"no orders for {method} alpha={alpha} c0={c0} at params {list(params)}")
    return float(selected["order"].mean())
