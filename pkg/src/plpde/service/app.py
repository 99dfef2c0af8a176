"""FastAPI front end over the run orchestration layer.

Every endpoint is stateless: a request carries a full run configuration (or
a stored solution) and the response carries the reports plus all output
files as base64 payloads, leaving file placement to the client.
"""

from __future__ import annotations

import base64
import json

from fastapi import FastAPI

from .. import __version__, hermfield as hf, runio
from ..errors import ConfigurationError
from .schemas import (
    HealthResponse,
    RunConfigModel,
    RunResponse,
    VerifyEstimatesRequest,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="plpde",
        version=__version__,
        description="Solves and probes for symmetric functions of partial Laplacians "
                    "on flat Hermitian model geometries.",
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/solve", response_model=RunResponse)
    def solve(config: RunConfigModel) -> RunResponse:
        result = runio.run_solve(config.as_config())
        return RunResponse(**result.to_response())

    @app.post("/probe-cone", response_model=RunResponse)
    def probe_cone(config: RunConfigModel) -> RunResponse:
        result = runio.run_probe_cone(config.as_config())
        return RunResponse(**result.to_response())

    @app.post("/mms", response_model=RunResponse)
    def mms(config: RunConfigModel) -> RunResponse:
        result = runio.run_mms(config.as_config())
        return RunResponse(**result.to_response())

    @app.post("/verify-estimates", response_model=RunResponse)
    def verify_estimates(req: VerifyEstimatesRequest) -> RunResponse:
        try:
            header_raw = req.fields.get("solution.json")
            payload_raw = req.fields.get("solution.f64")
            if header_raw is None or payload_raw is None:
                raise ConfigurationError("solution.json and solution.f64 payloads are required",
                                         field_path="fields")
            meta = json.loads(base64.b64decode(header_raw))
            field = hf.field_from_payload(meta, base64.b64decode(payload_raw))
            if not isinstance(field, hf.ScalarField):
                raise ConfigurationError("solution payload must be a scalar field",
                                         field_path="fields.solution")
        except (ConfigurationError, ValueError, KeyError) as err:
            info = {"message": str(err)}
            if isinstance(err, ConfigurationError) and err.field_path:
                info["field_path"] = err.field_path
            return RunResponse(status="config_error", exit_code=1, error=info)
        result = runio.run_verify_estimates(req.manifest, field)
        return RunResponse(**result.to_response())

    return app


app = create_app()
