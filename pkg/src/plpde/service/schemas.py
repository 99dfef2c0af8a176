"""Request/response models of the solve service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class GeometryModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    kind: Literal["flat_torus", "interval"]
    n: Optional[int] = None
    points_per_axis: Optional[int] = None
    a: Optional[float] = None
    b: Optional[float] = None
    points: Optional[int] = None


class OperatorModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    family: Literal["sum", "sigma", "logprod"]
    K: int = 1
    k: int = 1
    beta: float = 0.0
    level_shift: float = 0.0


class XFieldModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    kind: Literal["metric_multiple", "diagonal", "grid_file"]
    c: Optional[float] = None
    entries: Optional[list[float]] = None
    path: Optional[str] = None


class PsiModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    kind: Literal["constant", "grid_file", "mms"]
    value: Optional[float] = None
    path: Optional[str] = None
    u_star: Optional[dict] = None


class BarrierModel(BaseModel):
    b: float = 0.0
    rho0: float = 0.0
    rho1: float = 0.0


class ProblemModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    kind: Literal["pde", "barrier"] = "pde"
    geometry: GeometryModel
    operator: Optional[OperatorModel] = None
    X: Optional[XFieldModel] = None
    psi: Optional[PsiModel] = None
    mode: Optional[Literal["periodic_constant", "dirichlet"]] = None
    phi: Optional[list[float]] = None
    subsolution: Optional[dict] = None
    barrier: Optional[BarrierModel] = None
    rho0: float = 0.0
    rho1: float = 0.0


class SolverModel(BaseModel):
    model_config = ConfigDict(extra="allow")

    newton_tol: float = 1e-10
    homotopy_floor: float = 1e-4
    max_iterations: int = 12
    damping: float = 1.0
    dt_init: float = 0.25


class RunConfigModel(BaseModel):
    """One run configuration document; semantics are validated downstream."""

    model_config = ConfigDict(extra="allow")

    seed: int = 0
    problem: ProblemModel
    solver: Optional[SolverModel] = None
    estimates: Optional[dict] = None
    probe: Optional[dict] = None
    output: Optional[dict] = None

    def as_config(self) -> dict:
        # keep only entries the caller actually set, so the recorded
        # configuration (and its hash) reflects the submitted document
        return self.model_dump(exclude_unset=True)


class RunResponse(BaseModel):
    status: str
    exit_code: int
    report: dict = Field(default_factory=dict)
    files: dict[str, str] = Field(default_factory=dict)  # name -> base64 payload
    error: Optional[dict] = None


class VerifyEstimatesRequest(BaseModel):
    """A stored solution handed back for re-measurement."""

    manifest: dict
    fields: dict[str, str]  # file name -> base64 payload; needs solution.json/.f64


class HealthResponse(BaseModel):
    status: str
    version: str
