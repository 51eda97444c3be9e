"""Solver diagnostics and error records."""
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from app.models.enums import MethodTag


class SolveReport(BaseModel):
    """
    Diagnostics of one solve or one composite run.

    For composite runs (2M+1 quadrature solves, N time steps) `iterations`
    is the total and `iteration_counts` lists the individual solves.
    """
    method: str
    iterations: int = Field(default=0, ge=0)
    residual: float = Field(default=0.0, ge=0)
    tolerance: Optional[float] = Field(default=None, gt=0)
    wall_time: float = Field(default=0.0, ge=0)
    iteration_counts: List[int] = Field(default_factory=list)
    residual_history: List[float] = Field(default_factory=list)
    parameters: dict = Field(default_factory=dict)

    # Time stepping only
    norm_history: List[float] = Field(default_factory=list)
    harmonic_residuals: List[float] = Field(default_factory=list)
    monotone: Optional[bool] = None
    stability_violations: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_residual(self) -> "SolveReport":
        """A report with a tolerance is a successful solve: residual must meet it."""
        if self.tolerance is not None and not self.iteration_counts and self.residual > self.tolerance:
            raise ValueError(f"residual {self.residual:.3e} exceeds tolerance {self.tolerance:.3e}")
        return self

    @classmethod
    def combine(cls, method: str, reports: List["SolveReport"], wall_time: float,
                parameters: Optional[dict] = None) -> "SolveReport":
        """Aggregate per-solve reports of a composite run."""
        return cls(
            method=method,
            iterations=sum(r.iterations for r in reports),
            residual=max((r.residual for r in reports), default=0.0),
            wall_time=wall_time,
            iteration_counts=[r.iterations for r in reports],
            parameters=parameters or {},
        )


class ErrorRecord(BaseModel):
    """
    Relative errors of one computed solution against a reference.

    e_inf = max|y − y_ref| / max|y_ref| over all nodes
    e2_gamma, e2_omega = relative L2 errors on the boundary and on the domain
    """
    method: str
    alpha: float
    c0: float
    param: Optional[int] = None
    sigma: Optional[float] = None
    mesh_id: str = "mesh"
    e_inf: Optional[float] = Field(default=None, ge=0)
    e2_gamma: Optional[float] = Field(default=None, ge=0)
    e2_omega: Optional[float] = Field(default=None, ge=0)
    ref: str = ""
    monotone: Optional[bool] = None
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def sort_key(self) -> tuple:
        order = [m.value for m in MethodTag]
        method_rank = order.index(self.method) if self.method in order else len(order)
        return (method_rank, self.alpha, self.c0, self.param or 0, self.sigma or 0.0, self.mesh_id)
