"""Run configuration: what to solve, on which mesh, how, and where to write it."""
from typing import Dict, List, Optional, Tuple

import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.enums import FRACTIONAL_METHODS, GridLevel, MethodTag
from app.models.problem import FractionalProblem

logger = structlog.get_logger()


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.5, ge=0, le=1)
    c0: float = Field(default=5.0, gt=0)
    k: float = Field(default=1.0, gt=0)
    g: float = 1.0
    g_file: Optional[str] = None


class MeshConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid: GridLevel = GridLevel.COARSE
    rings: Optional[int] = Field(default=None, ge=2)
    refine: int = Field(default=0, ge=0)
    file: Optional[str] = None


class MethodConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: MethodTag = MethodTag.METHOD1
    M: int = Field(default=40, ge=1)
    eta: Optional[float] = Field(default=None, gt=0)
    N: int = Field(default=40, ge=1)
    sigma: float = Field(default=0.5, gt=0, le=1)
    delta: Optional[float] = Field(default=None, gt=0)

    @field_validator("sigma")
    @classmethod
    def warn_on_unstable_sigma(cls, v: float) -> float:
        if v < 0.5:
            logger.warning("sigma_below_stability_threshold", sigma=v,
                           note="stability in the boundary norm requires sigma >= 0.5")
        return v


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol: float = Field(default=1e-12, gt=0, lt=1)
    max_iter: Optional[int] = Field(default=None, ge=1)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str = "results/solution"
    formats: List[str] = Field(default_factory=lambda: ["vtk", "summary"])

    @field_validator("formats", mode="before")
    @classmethod
    def split_formats(cls, v):
        if isinstance(v, str):
            v = [part.strip() for part in v.split(",") if part.strip()]
        return v

    @field_validator("formats")
    @classmethod
    def known_formats(cls, v: List[str]) -> List[str]:
        unknown = set(v) - {"vtk", "summary", "nodal"}
        if unknown:
            raise ValueError(f"unknown output format(s): {sorted(unknown)}")
        return v


# Flat key -> (section, field)
FLAT_KEYS: Dict[str, Tuple[str, str]] = {
    "alpha": ("problem", "alpha"),
    "c0": ("problem", "c0"),
    "k": ("problem", "k"),
    "g": ("problem", "g"),
    "g_file": ("problem", "g_file"),
    "grid": ("mesh", "grid"),
    "rings": ("mesh", "rings"),
    "refine": ("mesh", "refine"),
    "mesh_file": ("mesh", "file"),
    "method": ("method", "name"),
    "M": ("method", "M"),
    "eta": ("method", "eta"),
    "N": ("method", "N"),
    "sigma": ("method", "sigma"),
    "delta": ("method", "delta"),
    "tol": ("solver", "tol"),
    "max_iter": ("solver", "max_iter"),
    "output": ("output", "path"),
    "formats": ("output", "formats"),
}


def flat_key_for(loc: Tuple) -> str:
    """Map a pydantic error location back to the flat key a user wrote."""
    for key, target in FLAT_KEYS.items():
        if tuple(loc[:2]) == target:
            return key
    return ".".join(str(part) for part in loc) or "config"


class RunConfig(BaseModel):
    """One solver invocation. Exactly one method is selected."""
    model_config = ConfigDict(extra="forbid")

    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    method: MethodConfig = Field(default_factory=MethodConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_alpha_for_method(self) -> "RunConfig":
        if self.method.name in FRACTIONAL_METHODS and not 0.0 < self.problem.alpha < 1.0:
            raise ValueError(
                f"alpha must lie in (0, 1) for method '{self.method.name.value}', got {self.problem.alpha}"
            )
        return self

    def fractional_problem(self) -> FractionalProblem:
        """Problem of a method1/method2/spectral run; a g_file datum is applied by the caller."""
        if self.method.name not in FRACTIONAL_METHODS:
            raise ValueError(f"method '{self.method.name.value}' solves a limiting case, not a fractional problem")
        return FractionalProblem(alpha=self.problem.alpha, c0=self.problem.c0, k=self.problem.k,
                                 g=self.problem.g, delta=self.method.delta)

    @classmethod
    def from_flat(cls, flat: Dict[str, object]) -> "RunConfig":
        sections: Dict[str, Dict[str, object]] = {}
        for key, value in flat.items():
            section, name = FLAT_KEYS[key]
            sections.setdefault(section, {})[name] = value
        return cls.model_validate(sections)

    def to_flat(self) -> Dict[str, str]:
        flat: Dict[str, str] = {}
        for key, (section, name) in FLAT_KEYS.items():
            value = getattr(getattr(self, section), name)
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(value)
            elif hasattr(value, "value"):
                value = value.value
            elif isinstance(value, float):
                value = repr(value)
            flat[key] = str(value)
        return flat
