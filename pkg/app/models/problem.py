"""Problem data models: coefficients, fractional problem, time-scheme parameters."""
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import ConfigurationError, InvalidParameterError

logger = structlog.get_logger()

# A coefficient is a constant or a vectorized function f(x, y)
ScalarField = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def evaluate_field(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Evaluate a constant or callable coefficient at an (n, 2) array of points."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if callable(f):
        values = np.asarray(f(points[:, 0], points[:, 1]), dtype=float)
        return np.broadcast_to(values, (points.shape[0],)).copy()
    return np.full(points.shape[0], float(f))


@dataclass(frozen=True)
class Coefficients:
    """
    Coefficients of a(u, v) = ∫ k ∇u·∇v + c u v and the boundary datum g.

    k and c are evaluated at triangle centroids, g at boundary Gauss points.
    """
    k: ScalarField = 1.0
    c: ScalarField = 0.0
    g: ScalarField = 1.0

    def __post_init__(self):
        if not callable(self.k) and float(self.k) <= 0.0:
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        if not callable(self.c) and float(self.c) < 0.0:
            raise InvalidParameterError(f"c must be nonnegative, got {self.c}")

    @classmethod
    def constant(cls, k: float = 1.0, c0: float = 1.0, g: ScalarField = 1.0) -> "Coefficients":
        return cls(k=k, c=c0, g=g)


class FractionalProblem(BaseModel):
    """
    S^α y = g with the spectral lower bound δ used by the time-stepping method.

    δ is optional: a given δ is checked against λ̃₁ by check_delta at solve
    time, otherwise margin·λ̃₁ is used.
    """
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0, lt=1)
    c0: float = Field(default=1.0, gt=0)
    k: float = Field(default=1.0, gt=0)
    g: float = 1.0
    delta: Optional[float] = Field(default=None, gt=0)

    def coefficients(self) -> Coefficients:
        return Coefficients.constant(k=self.k, c0=self.c0, g=self.g)


def check_delta(delta: Optional[float], lambda1: float, margin: float) -> float:
    """δ ≤ λ̃₁, defaulting to margin·λ̃₁; values within 1% of λ̃₁ are accepted with a warning."""
    if delta is None:
        return float(margin * lambda1)
    if delta <= 0.0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    if delta > lambda1 * (1.0 + 1e-10):
        raise ConfigurationError(
            f"delta={delta:.6g} exceeds the smallest Steklov eigenvalue {lambda1:.6g}; "
            "D = S - delta*I would be indefinite, choose delta <= lambda1"
        )
    if delta > 0.99 * lambda1:
        logger.warning("delta_close_to_lambda1", delta=delta, lambda1=lambda1)
    return float(delta)


class TimeSchemeParams(BaseModel):
    """
    Two-level σ-weighted scheme on pseudo-time [0, 1]: τ = 1/N, t^n = nτ.

    σ ≥ 0.5 gives unconditional stability in the boundary norm; smaller σ is
    accepted and logged.
    """
    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=1)
    sigma: float = Field(default=0.5, gt=0, le=1)
    delta: Optional[float] = Field(default=None, gt=0)

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def stable(self) -> bool:
        return self.sigma >= 0.5

    @model_validator(mode="after")
    def warn_unstable_weight(self) -> "TimeSchemeParams":
        if not self.stable:
            logger.warning("sigma_below_stability_threshold", sigma=self.sigma)
        return self

    def t(self, n: int) -> float:
        return n * self.tau

    def t_sigma(self, n: int) -> float:
        """σ t^{n+1} + (1 − σ) t^n"""
        return (n + self.sigma) * self.tau
