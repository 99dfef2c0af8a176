"""Run configuration parsing, orchestration, and report emission.

A run configuration is one JSON document.  Parsing is strict: unknown or
missing entries fail with the dotted field path.  All emitted documents are
canonical JSON (sorted keys, fixed separators, no timestamps), so identical
configurations produce byte-identical reports.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, conegeo, estimates, hermfield as hf, solver as sv
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    HomotopyStall,
    NewtonStall,
    ProbeInconclusive,
)
from .runtime import thread_count
from .symcalc import OperatorSpec


def jsonable(obj):
    """Recursively replace non-finite floats with tagged strings."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def manifest(config: dict) -> dict:
    return {
        "config_sha256": config_hash(config),
        "seed": config.get("seed", 0),
        "threads": thread_count(),
        "versions": {
            "plpde": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "config": config,
    }


def _get(cfg: dict, path: str, required=True, default=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigurationError("missing required entry", field_path=path)
            return default
        node = node[part]
    return node


def parse_geometry(cfg: dict, path: str = "problem.geometry") -> hf.Geometry:
    kind = _get(cfg, "kind")
    try:
        if kind == "flat_torus":
            metric = None
            if "metric_real" in cfg:
                metric = np.asarray(cfg["metric_real"], dtype=float) + \
                    1j * np.asarray(cfg.get("metric_imag", np.zeros_like(cfg["metric_real"])))
            return hf.FlatTorus(n=int(cfg["n"]), points_per_axis=int(cfg["points_per_axis"]),
                                metric=metric)
        if kind == "interval":
            return hf.Interval(a=float(cfg["a"]), b=float(cfg["b"]), points=int(cfg["points"]))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigurationError(str(err), field_path=path) from err
    raise ConfigurationError(f"unknown geometry kind {kind!r}", field_path=path + ".kind")


def parse_operator(cfg: dict, n: int, path: str = "problem.operator") -> OperatorSpec:
    try:
        return OperatorSpec(
            family=str(cfg["family"]),
            n=n,
            K=int(cfg.get("K", 1)),
            k=int(cfg.get("k", 1)),
            beta=float(cfg.get("beta", 0.0)),
            level_shift=float(cfg.get("level_shift", 0.0)),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise ConfigurationError(str(err), field_path=path) from err


def parse_x_field(cfg: dict, geometry: hf.Geometry, path: str = "problem.X") -> hf.HermitianField:
    kind = cfg.get("kind")
    if kind == "metric_multiple":
        return hf.metric_multiple(geometry, float(cfg.get("c", 1.0)))
    if kind == "diagonal":
        entries = cfg.get("entries")
        if entries is None or len(entries) != geometry.n:
            raise ConfigurationError(f"diagonal X needs {geometry.n} entries",
                                     field_path=path + ".entries")
        return hf.constant_hermitian(geometry, np.diag(np.asarray(entries, dtype=float)))
    if kind == "grid_file":
        loaded = hf.load_field(cfg["path"])
        if not isinstance(loaded, hf.HermitianField):
            raise ConfigurationError("X grid file must hold a Hermitian field",
                                     field_path=path + ".path")
        return loaded
    raise ConfigurationError(f"unknown X kind {kind!r}", field_path=path + ".kind")


def parse_u_star(cfg: dict, geometry: hf.Geometry, path: str) -> hf.ScalarField:
    kind = cfg.get("kind")
    if kind == "cos_modes":
        if not isinstance(geometry, hf.FlatTorus):
            raise ConfigurationError("cos_modes profiles need the torus", field_path=path)
        vals = np.zeros(geometry.grid_shape)
        for i, mode in enumerate(cfg.get("modes", [])):
            axis = int(mode["axis"])
            if not (0 <= axis < 2 * geometry.n):
                raise ConfigurationError(f"axis {axis} out of range",
                                         field_path=f"{path}.modes[{i}].axis")
            freq = int(mode.get("frequency", 1))
            amp = float(mode["amplitude"])
            vals = vals + amp * np.cos(2 * np.pi * freq * geometry.axis_coordinates(axis))
        return hf.ScalarField(geometry, vals)
    if kind == "sine":
        if not isinstance(geometry, hf.Interval):
            raise ConfigurationError("sine profiles need the interval", field_path=path)
        x = geometry.x
        s = (x - geometry.a) / (geometry.b - geometry.a)
        return hf.ScalarField(
            geometry,
            float(cfg.get("amplitude", 0.1)) * np.sin(math.pi * int(cfg.get("frequency", 1)) * s))
    if kind == "grid_file":
        loaded = hf.load_field(cfg["path"])
        if not isinstance(loaded, hf.ScalarField):
            raise ConfigurationError("u_star grid file must hold a scalar field", field_path=path)
        return loaded
    raise ConfigurationError(f"unknown u_star kind {kind!r}", field_path=path + ".kind")


@dataclass
class ParsedProblem:
    kind: str                       # "pde" | "barrier"
    spec: sv.ProblemSpec | None = None
    u_star: hf.ScalarField | None = None
    barrier_b: float = 0.0
    barrier_geometry: hf.Interval | None = None
    rho: tuple[float, float] = (0.0, 0.0)


def build_problem(config: dict) -> ParsedProblem:
    """Turn a run configuration into a validated problem description."""
    problem = _get(config, "problem")
    kind = problem.get("kind", "pde")
    geometry = parse_geometry(_get(problem, "geometry"), "problem.geometry")

    if kind == "barrier":
        if not isinstance(geometry, hf.Interval):
            raise ConfigurationError("barrier problems live on the interval",
                                     field_path="problem.geometry.kind")
        bcfg = _get(problem, "barrier")
        return ParsedProblem(
            kind="barrier",
            barrier_geometry=geometry,
            barrier_b=float(bcfg.get("b", 0.0)),
            rho=(float(bcfg.get("rho0", 0.0)), float(bcfg.get("rho1", 0.0))),
        )
    if kind != "pde":
        raise ConfigurationError(f"unknown problem kind {kind!r}", field_path="problem.kind")

    operator = parse_operator(_get(problem, "operator"), geometry.n, "problem.operator")
    X = parse_x_field(_get(problem, "X"), geometry, "problem.X")

    psi_cfg = _get(problem, "psi")
    u_star = None
    mode = problem.get("mode", "periodic_constant" if isinstance(geometry, hf.FlatTorus)
           else "dirichlet")
    if psi_cfg.get("kind") == "mms":
        u_star = parse_u_star(_get(psi_cfg, "u_star"), geometry, "problem.psi.u_star")
        spec = sv.mms_generate(geometry, operator, u_star, X)
    else:
        if psi_cfg.get("kind") == "constant":
            psi = hf.scalar_constant(geometry, float(psi_cfg["value"]))
        elif psi_cfg.get("kind") == "grid_file":
            loaded = hf.load_field(psi_cfg["path"])
            if not isinstance(loaded, hf.ScalarField) or \
                    loaded.geometry.grid_shape != geometry.grid_shape:
                raise ConfigurationError("psi grid file does not match the geometry",
                                         field_path="problem.psi.path")
            psi = hf.ScalarField(geometry, loaded.values)
        else:
            raise ConfigurationError(f"unknown psi kind {psi_cfg.get('kind')!r}",
                                     field_path="problem.psi.kind")
        phi = None
        subsolution = None
        if mode == "dirichlet":
            phi_cfg = problem.get("phi", [0.0, 0.0])
            phi = (float(phi_cfg[0]), float(phi_cfg[1]))
            sub_cfg = problem.get("subsolution")
            if sub_cfg is None:
                raise ConfigurationError("dirichlet problems need a subsolution",
                                         field_path="problem.subsolution")
            subsolution = _parse_subsolution(sub_cfg, geometry, phi)
        spec = sv.ProblemSpec(geometry=geometry, operator=operator, X=X, psi=psi,
                              mode=mode, phi=phi, subsolution=subsolution)
    spec.rho0 = float(problem.get("rho0", 0.0))
    spec.rho1 = float(problem.get("rho1", 0.0))
    sv.validate_problem(spec)
    return ParsedProblem(kind="pde", spec=spec, u_star=u_star)


def _parse_subsolution(cfg: dict, geometry: hf.Geometry, phi) -> hf.ScalarField:
    kind = cfg.get("kind")
    if kind == "grid_file":
        loaded = hf.load_field(cfg["path"])
        if not isinstance(loaded, hf.ScalarField):
            raise ConfigurationError("subsolution grid file must hold a scalar field",
                                     field_path="problem.subsolution.path")
        return hf.ScalarField(geometry, loaded.values)
    if kind == "parabolic":
        if not isinstance(geometry, hf.Interval):
            raise ConfigurationError("parabolic subsolutions need the interval",
                                     field_path="problem.subsolution.kind")
        x = geometry.x
        s = (x - geometry.a) / (geometry.b - geometry.a)
        linear = phi[0] + (phi[1] - phi[0]) * s
        bump = float(cfg.get("strength", 1.0)) * (x - geometry.a) * (x - geometry.b)
        return hf.ScalarField(geometry, linear + bump)
    raise ConfigurationError(f"unknown subsolution kind {kind!r}",
                             field_path="problem.subsolution.kind")


def _solver_options(config: dict) -> dict:
    scfg = config.get("solver", {})
    return {
        "newton_tol": float(scfg.get("newton_tol", 1e-10)),
        "t_floor": float(scfg.get("homotopy_floor", 1e-4)),
        "max_newton": int(scfg.get("max_iterations", 12)),
        "damping": float(scfg.get("damping", 1.0)),
        "dt_init": float(scfg.get("dt_init", 0.25)),
    }


def _default_ball(geometry: hf.Geometry, config: dict) -> tuple[list[float], float]:
    ecfg = config.get("estimates", {})
    if isinstance(geometry, hf.FlatTorus):
        center = ecfg.get("center", [0.0] * (2 * geometry.n))
        radius = float(ecfg.get("radius", 0.25))
    else:
        center = ecfg.get("center", [0.5 * (geometry.a + geometry.b)])
        radius = float(ecfg.get("radius", 0.25 * (geometry.b - geometry.a)))
    return [float(c) for c in np.atleast_1d(center)], radius


@dataclass
class RunResult:
    status: str
    exit_code: int
    report: dict = dc_field(default_factory=dict)
    files: dict = dc_field(default_factory=dict)  # name -> bytes
    error: dict | None = None

    def to_response(self) -> dict:
        import base64

        return {
            "status": self.status,
            "exit_code": self.exit_code,
            "report": self.report,
            "files": {k: base64.b64encode(v).decode() for k, v in self.files.items()},
            "error": self.error,
        }


def _field_payload(fieldobj, name: str) -> dict:
    """In-memory field dump: raw bytes plus sidecar header."""
    if isinstance(fieldobj, hf.ScalarField):
        payload = np.ascontiguousarray(fieldobj.values, dtype="<f8").tobytes()
        kind, components, shape = "scalar", "real", list(fieldobj.values.shape)
    else:
        payload = np.ascontiguousarray(fieldobj.matrices.astype("<c16")).view("<f8").tobytes()
        kind, components, shape = "hermitian", "complex_interleaved_re_im", list(fieldobj.matrices.shape)
    header = {
        "format": "plpde-field-v1",
        "kind": kind,
        "geometry": hf.geometry_to_dict(fieldobj.geometry),
        "shape": shape,
        "dtype": "float64",
        "endianness": "little",
        "order": "C",
        "components": components,
    }
    return {
        f"{name}.f64": payload,
        f"{name}.json": (json.dumps(header, indent=2, sort_keys=True) + "\n").encode(),
    }


def _json_payload(doc: dict) -> bytes:
    return (canonical_json(doc) + "\n").encode()


def _config_error(err: Exception) -> RunResult:
    info = {"message": str(err)}
    if isinstance(err, ConfigurationError) and err.field_path:
        info["field_path"] = err.field_path
    return RunResult(status="config_error", exit_code=1, error=info)


def run_solve(config: dict) -> RunResult:
    """Execute a solve run: continuation/Dirichlet PDE or the barrier problem."""
    try:
        parsed = build_problem(config)
    except (ConfigurationError, AdmissibilityError) as err:
        return _config_error(err)

    files: dict[str, bytes] = {"manifest.json": _json_payload(manifest(config))}

    if parsed.kind == "barrier":
        result = sv.barrier_solve(parsed.barrier_geometry, rho=parsed.rho, b=parsed.barrier_b)
        report = {
            "kind": "barrier",
            "nonexistence": result.nonexistence,
            "b": parsed.barrier_b,
            "w_min": result.w_min,
            "cross_check_gap": result.cross_check_gap,
            "growth_record": list(result.growth_record),
        }
        files["barrier_report.json"] = _json_payload(report)
        if result.h is not None:
            files.update(_field_payload(result.h, "barrier_h"))
        return RunResult(status="converged", exit_code=0, report=report, files=files)

    spec = parsed.spec
    validation = sv.validate_problem(spec)
    opts = _solver_options(config)
    try:
        if spec.mode == "dirichlet":
            state = sv.dirichlet_solve(spec, newton_tol=opts["newton_tol"],
                                       max_newton=4 * opts["max_newton"],
                                       damping=opts["damping"])
        else:
            state = sv.homotopy_solve(spec, newton_tol=opts["newton_tol"],
                                      t_floor=opts["t_floor"], dt_init=opts["dt_init"],
                                      max_newton=opts["max_newton"], damping=opts["damping"])
    except (HomotopyStall, NewtonStall) as err:
        state = getattr(err, "state", None)
        report = {"kind": "pde", "stalled": str(err)}
        if state is not None:
            report["solve"] = sv.solve_report(state, validation)
            files.update(_field_payload(state.u, "solution"))
        files["solve_report.json"] = _json_payload(report)
        return RunResult(status="stalled", exit_code=2, report=report, files=files)
    except ConfigurationError as err:
        return _config_error(err)

    center, radius = _default_ball(spec.geometry, config)
    level = spec.geometry.points_per_axis if isinstance(spec.geometry, hf.FlatTorus) \
        else spec.geometry.points
    est = estimates.build_report("solution", [(level, state.u)], center, radius)
    report = {
        "kind": "pde",
        "solve": sv.solve_report(state, validation),
        "estimates": est.to_dict(),
    }
    if parsed.u_star is not None:
        gauge = parsed.u_star.values - parsed.u_star.values.max() \
            if spec.mode == "periodic_constant" else parsed.u_star.values
        report["mms_error"] = float(np.abs(state.u.values - gauge).max())
    files["solve_report.json"] = _json_payload(report["solve"])
    files["estimate_report.json"] = _json_payload(est.to_dict())
    files["estimates.csv"] = est.to_csv().encode()
    files.update(_field_payload(state.u, "solution"))
    return RunResult(status="converged", exit_code=0, report=report, files=files)


def run_probe_cone(config: dict) -> RunResult:
    """Rank-condition check of the configured operator with a full certificate."""
    try:
        problem = _get(config, "problem")
        geometry = parse_geometry(_get(problem, "geometry"), "problem.geometry")
        operator = parse_operator(_get(problem, "operator"), geometry.n, "problem.operator")
        pcfg = config.get("probe", {})
        magnitudes = tuple(float(s) for s in pcfg.get("magnitudes",
                                                      conegeo.DEFAULT_PROBE_MAGNITUDES))
        num_levels = int(pcfg.get("levels", 5))
        ray_budget = pcfg.get("ray_budget")
        ray_budget = None if ray_budget is None else int(ray_budget)
    except (ConfigurationError, AdmissibilityError) as err:
        return _config_error(err)

    files = {"manifest.json": _json_payload(manifest(config))}
    try:
        result = conegeo.rank_condition_check(operator, probe_magnitudes=magnitudes,
                                              num_levels=num_levels, ray_budget=ray_budget)
    except ProbeInconclusive as err:
        report = {"inconclusive": str(err)}
        files["rank_certificate.json"] = _json_payload(report)
        return RunResult(status="inconclusive", exit_code=2, report=report, files=files)

    report = result.to_dict()
    files["rank_certificate.json"] = _json_payload(report)
    status = "passes" if result.passes else "fails"
    return RunResult(status=status, exit_code=0 if result.passes else 3,
                     report=report, files=files)


def run_mms(config: dict) -> RunResult:
    """Emit the manufactured instance: psi field, exact solution, margins."""
    try:
        parsed = build_problem(config)
    except (ConfigurationError, AdmissibilityError) as err:
        return _config_error(err)
    if parsed.kind != "pde" or parsed.u_star is None:
        return _config_error(ConfigurationError(
            "mms runs need problem.psi.kind == 'mms'", field_path="problem.psi.kind"))
    spec = parsed.spec
    s = hf.spectral_decompose(hf.assemble_g(parsed.u_star, spec.X))
    margin = float(hf.operator_margin(spec.operator, s).min())
    report = {
        "kind": "mms",
        "admissibility_margin": margin,
        "psi_range": [float(spec.psi.values.min()), float(spec.psi.values.max())],
        "mode": spec.mode,
    }
    files = {"manifest.json": _json_payload(manifest(config)),
             "mms_report.json": _json_payload(report)}
    files.update(_field_payload(spec.psi, "psi"))
    files.update(_field_payload(parsed.u_star, "u_star"))
    return RunResult(status="generated", exit_code=0, report=report, files=files)


def run_verify_estimates(manifest_doc: dict, solution_field: hf.ScalarField) -> RunResult:
    """Re-measure the estimate ratios of a stored solution."""
    config = manifest_doc.get("config", {})
    center, radius = _default_ball(solution_field.geometry, config)
    level = solution_field.geometry.points_per_axis \
        if isinstance(solution_field.geometry, hf.FlatTorus) else solution_field.geometry.points
    est = estimates.build_report("verify", [(level, solution_field)], center, radius)
    report = est.to_dict()
    files = {
        "estimate_report.json": _json_payload(report),
        "estimates.csv": est.to_csv().encode(),
    }
    return RunResult(status="verified", exit_code=0, report=report, files=files)


def write_files(files: dict, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, payload in files.items():
        path = outdir / name
        path.write_bytes(payload)
        written.append(path)
    return sorted(written)
