"""Nonlinear solvers for the partial-sum eigenvalue equations.

The closed-geometry problem is solved by continuation: the equation is
deformed so that at parameter t = 1 the zero function solves it exactly, t
marches down with adaptive steps, and at the floor the solver switches to
the explicit (u, b) system with a mean-zero gauge, finishing with the
sup u = 0 normalization (a free constant shift at t = 0).  Every Newton
step is safeguarded: the backtracking line search only accepts iterates
that are admissible at every grid point and strictly decrease the max-norm
residual.

Linear systems use a matrix-free Krylov solve with a constant-coefficient
FFT preconditioner on the torus, and a direct banded solve on the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import hermfield as hf
from . import symcalc
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    HomotopyStall,
    LinearSolveFailure,
    NewtonStall,
)
from .hermfield import (
    FlatTorus,
    Geometry,
    HermitianField,
    Interval,
    ScalarField,
    SpectralField,
)
from .symcalc import OperatorSpec

NEWTON_TOL = 1e-10
LINE_SEARCH_FLOOR = 2.0**-30
BOUND_SLACK = 1e-8


@dataclass
class ProblemSpec:
    """A fully specified discrete problem instance.

    ``X`` and ``psi`` are independent of the unknown; the only solution
    dependence on the right-hand side enters through the continuation
    structure itself.  ``rho0``/``rho1`` are recorded growth-envelope
    parameters (validation data only; gradient-dependent coefficients are
    not solved for).
    """

    geometry: Geometry
    operator: OperatorSpec
    X: HermitianField
    psi: ScalarField
    mode: str = "periodic_constant"  # or "dirichlet"
    phi: tuple[float, float] | None = None
    subsolution: ScalarField | None = None
    rho0: float = 0.0
    rho1: float = 0.0


@dataclass
class SolveState:
    """Current iterate of a solve, with its audit trail."""

    u: ScalarField
    b: float = 0.0
    t: float = 0.0
    residual_history: list = field(default_factory=list)  # (t, iteration, max-norm)
    admissibility_margin: float = math.nan
    homotopy_A: float | None = None
    homotopy_H: ScalarField | None = None
    bound_track: list = field(default_factory=list)
    linear_iterations: int = 0
    newton_iterations: int = 0
    converged: bool = False
    warnings: list = field(default_factory=list)


def validate_problem(spec: ProblemSpec) -> dict:
    """Check the structure conditions a solvable instance must satisfy.

    Raises ConfigurationError naming the violated condition; returns the
    validation record (window margins, admissibility of X, growth data).
    """
    if spec.mode not in ("periodic_constant", "dirichlet"):
        raise ConfigurationError(f"unknown mode {spec.mode!r}", field_path="problem.mode")
    if spec.mode == "dirichlet" and not isinstance(spec.geometry, Interval):
        raise ConfigurationError("dirichlet mode requires the interval geometry",
                                 field_path="problem.mode")
    if spec.mode == "dirichlet" and spec.phi is None:
        raise ConfigurationError("dirichlet mode requires boundary values phi",
                                 field_path="problem.phi")
    if spec.mode == "periodic_constant" and not isinstance(spec.geometry, FlatTorus):
        raise ConfigurationError("periodic mode requires the torus geometry",
                                 field_path="problem.mode")
    if spec.X.geometry.grid_shape != spec.geometry.grid_shape:
        raise ConfigurationError("X grid does not match the geometry", field_path="problem.X")
    if spec.psi.values.shape != spec.geometry.grid_shape:
        raise ConfigurationError("psi grid does not match the geometry", field_path="problem.psi")
    if spec.X.hermitian_defect() > 1e-10:
        raise ConfigurationError("X must be Hermitian", field_path="problem.X")

    inf_psi = float(spec.psi.values.min())
    sup_psi = float(spec.psi.values.max())
    boundary_sup = spec.operator.boundary_sup
    if not (boundary_sup < inf_psi):
        raise ConfigurationError(
            f"condition sup_dGamma f < inf psi violated: boundary supremum {boundary_sup} "
            f"vs inf psi {inf_psi}", field_path="problem.psi")

    # the value window must be reachable along the diagonal
    c0_probe = float(symcalc.f_diag(spec.operator.family_ambient(), 1e8)) - sup_psi
    if c0_probe <= 0:
        raise ConfigurationError(
            f"psi exceeds the attainable range of f (diagonal probe gap {c0_probe})",
            field_path="problem.psi")

    record = {
        "inf_psi": inf_psi,
        "sup_psi": sup_psi,
        "boundary_sup": boundary_sup,
        "c0_probe": c0_probe,
        "rho0": spec.rho0,
        "rho1": spec.rho1,
    }
    if spec.mode == "periodic_constant":
        sX = hf.spectral_decompose(spec.X)
        margin = float(hf.operator_margin(spec.operator, sX).min())
        record["X_margin"] = margin
        if margin <= 0:
            raise ConfigurationError(
                f"X is not admissible (worst cone margin {margin:.3e}); "
                "the closed-geometry problem needs admissible constants",
                field_path="problem.X")
    return record


# -- shared evaluation machinery ----------------------------------------------

@dataclass
class _Context:
    spec: ProblemSpec
    A: float = 0.0
    H: np.ndarray | None = None    # f at X + A omega (pointwise)
    F0: np.ndarray | None = None   # f at X (pointwise)
    omega_sym: np.ndarray | None = None  # Laplacian Fourier symbol (torus)

    @property
    def geometry(self) -> Geometry:
        return self.spec.geometry


@dataclass
class _Evaluation:
    admissible: bool
    margin: float
    spectral: SpectralField | None = None
    values: np.ndarray | None = None
    residual: np.ndarray | None = None
    max_norm: float = math.inf
    worst_point: tuple | None = None


def _effective_X(ctx: _Context, t: float) -> HermitianField:
    if t == 0.0:
        return ctx.spec.X
    geom = ctx.geometry
    shift = t * ctx.A * geom.omega()
    return HermitianField(geom, ctx.spec.X.matrices + shift)


def _rhs(ctx: _Context, state: SolveState) -> np.ndarray:
    spec = ctx.spec
    if spec.mode == "dirichlet":
        return spec.psi.values
    if state.t > 0.0:
        psi_t = state.t * ctx.H + (1.0 - state.t) * spec.psi.values
        return np.exp(state.t * state.u.values) * psi_t
    return math.exp(state.b) * spec.psi.values


def _evaluate(ctx: _Context, state: SolveState) -> _Evaluation:
    spec = ctx.spec
    g = hf.assemble_g(state.u, _effective_X(ctx, state.t))
    s = hf.spectral_decompose(g)
    margins = hf.operator_margin(spec.operator, s)
    mmin = float(margins.min())
    if mmin <= 0.0:
        worst = np.unravel_index(int(np.argmin(margins)), spec.geometry.grid_shape)
        return _Evaluation(admissible=False, margin=mmin, worst_point=worst)
    values = hf.operator_values(spec.operator, s)
    resid = values - _rhs(ctx, state)
    if spec.mode == "dirichlet":
        v = state.u.values
        resid = resid.copy()
        resid[0] = v[0] - spec.phi[0]
        resid[-1] = v[-1] - spec.phi[1]
    return _Evaluation(
        admissible=True,
        margin=mmin,
        spectral=s,
        values=values,
        residual=resid,
        max_norm=float(np.abs(resid).max()),
    )


def _context(spec: ProblemSpec, A: float | None = None) -> _Context:
    ctx = _Context(spec=spec)
    if isinstance(spec.geometry, FlatTorus):
        ctx.omega_sym = hf.laplacian_symbol(spec.geometry)
    if spec.mode == "periodic_constant":
        ctx.A = _choose_A(spec) if A is None else float(A)
        sH = hf.spectral_decompose(_effective_X(ctx, 1.0))
        ctx.H = np.asarray(hf.operator_values(spec.operator, sH))
        sX = hf.spectral_decompose(spec.X)
        ctx.F0 = np.asarray(hf.operator_values(spec.operator, sX))
    return ctx


def _choose_A(spec: ProblemSpec) -> float:
    """Smallest power-of-two amplitude making the deformed start comfortably positive."""
    target = max(2.0 * float(spec.psi.values.max()), 0.5)
    A = 1.0
    geom = spec.geometry
    for _ in range(60):
        shifted = HermitianField(geom, spec.X.matrices + A * geom.omega())
        try:
            s = hf.spectral_decompose(shifted)
            if float(hf.operator_margin(spec.operator, s).min()) > 0:
                vals = hf.operator_values(spec.operator, s)
                if float(np.min(vals)) >= target:
                    return A
        except AdmissibilityError:
            pass
        A *= 2.0
    raise ConfigurationError("could not find a deformation amplitude with positive start value")


def residual(spec: ProblemSpec, state: SolveState) -> ScalarField:
    """Pointwise equation residual of the given iterate.

    In continuation mode (t > 0) the deformed right-hand side interpolates
    between the exactly-solvable start and the target; at t = 0 the unknown
    constant multiplies psi exponentially.
    """
    ctx = _context(spec, A=state.homotopy_A) if spec.mode == "periodic_constant" else _context(spec)
    if state.homotopy_H is not None:
        ctx.H = state.homotopy_H.values
    ev = _evaluate(ctx, state)
    if not ev.admissible:
        raise AdmissibilityError(
            f"iterate leaves the admissible cone (worst margin {ev.margin:.3e})",
            where=ev.worst_point, margin=ev.margin)
    return ScalarField(spec.geometry, ev.residual)


# -- linear solves -------------------------------------------------------------

def _solve_linear_torus(ctx: _Context, C: HermitianField, zero_order: np.ndarray,
                        rhs: np.ndarray, rtol: float,
                        b_column: np.ndarray | None = None) -> tuple[np.ndarray, float, int]:
    """Matrix-free Krylov solve of (coefficient Hessian contraction - zero_order).

    With ``b_column`` the system is bordered by the unknown constant and a
    mean-zero gauge row.  Preconditioning inverts the constant-coefficient
    surrogate via the FFT.
    """
    geom = ctx.geometry
    shape = geom.grid_shape
    npts = int(np.prod(shape))
    n = geom.n
    cbar = float(np.einsum("...ii->...", C.matrices).real.mean()) / n
    zbar = float(zero_order.mean())
    symbol = 0.25 * cbar * ctx.omega_sym - zbar  # strictly negative for zbar > 0

    counter = {"n": 0}

    def apply_interior(v):
        field = ScalarField(geom, v.reshape(shape))
        out = hf.contract_hessian(C, field)
        if zbar != 0.0 or zero_order.any():
            out = out - zero_order * field.values
        return out.reshape(-1)

    if b_column is None:
        def matvec(v):
            counter["n"] += 1
            return apply_interior(v)

        def precond(v):
            vh = hf._fft(v.reshape(shape))
            return hf._ifft(vh / symbol, shape).reshape(-1)

        op = spla.LinearOperator((npts, npts), matvec=matvec, dtype=float)
        M = spla.LinearOperator((npts, npts), matvec=precond, dtype=float)
        x, info = spla.lgmres(op, rhs.reshape(-1), M=M, rtol=rtol, atol=0.0, maxiter=400)
        if info < 0 or not np.all(np.isfinite(x)):
            raise LinearSolveFailure(f"Krylov solve failed (info={info})")
        return x.reshape(shape), 0.0, counter["n"]

    bcol = b_column.reshape(-1)
    mean_b = float(bcol.mean())

    def matvec(v):
        counter["n"] += 1
        du, db = v[:-1], v[-1]
        top = apply_interior(du) + bcol * db
        bottom = du.mean()
        return np.concatenate([top, [bottom]])

    # zero mode handled through the bordered row
    sym_safe = symbol.copy()
    it = np.unravel_index(0, symbol.shape)
    sym_safe[it] = 1.0

    def precond(v):
        du, db = v[:-1], v[-1]
        vh = hf._fft(du.reshape(shape))
        vh = vh / sym_safe
        vh[it] = 0.0
        top = hf._ifft(vh, shape).reshape(-1)
        db_new = du.mean() / mean_b if mean_b != 0 else db
        return np.concatenate([top, [db_new]])

    op = spla.LinearOperator((npts + 1, npts + 1), matvec=matvec, dtype=float)
    M = spla.LinearOperator((npts + 1, npts + 1), matvec=precond, dtype=float)
    rhs_full = np.concatenate([rhs.reshape(-1), [0.0]])
    x, info = spla.lgmres(op, rhs_full, M=M, rtol=rtol, atol=0.0, maxiter=400)
    if info < 0 or not np.all(np.isfinite(x)):
        raise LinearSolveFailure(f"Krylov solve failed (info={info})")
    return x[:-1].reshape(shape), float(x[-1]), counter["n"]


def _solve_linear_interval(geom: Interval, C: HermitianField, zero_order: np.ndarray,
                           rhs: np.ndarray, dirichlet_rows: bool = True) -> np.ndarray:
    """Direct banded solve of the linearized interval operator."""
    m = geom.points
    h2 = geom.spacing**2
    coeff = C.matrices[..., 0, 0].real * 0.25
    ab = np.zeros((3, m))
    ab[1, :] = -2.0 * coeff / h2 - zero_order
    ab[0, 1:] = coeff[:-1] / h2   # superdiagonal, row i couples u_{i+1}
    ab[2, :-1] = coeff[1:] / h2   # subdiagonal
    b = rhs.copy()
    if dirichlet_rows:
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        b[0] = rhs[0]
        b[-1] = rhs[-1]
    try:
        return scipy.linalg.solve_banded((1, 1), ab, b)
    except scipy.linalg.LinAlgError as err:  # pragma: no cover - degenerate coefficients
        raise LinearSolveFailure(str(err)) from err


# -- Newton iteration ----------------------------------------------------------

def _degenerate_guard(diag: np.ndarray, total: np.ndarray) -> tuple[np.ndarray, int]:
    """Tikhonov lift for nearly vanishing ellipticity directions."""
    scale = np.maximum(total, 1.0)[..., None]
    mask = diag < 1e-12 * scale
    if not mask.any():
        return diag, 0
    return np.where(mask, diag + 1e-10 * scale, diag), int(mask.sum())


def _newton_direction(ctx: _Context, state: SolveState, ev: _Evaluation,
                      rtol: float) -> tuple[np.ndarray, float, int, int]:
    spec = ctx.spec
    diag = hf.diagonal_coefficients(spec.operator, ev.spectral)
    total = diag.sum(axis=-1)
    lifted, lift_count = _degenerate_guard(diag, total)
    C = HermitianField(spec.geometry, np.einsum(
        "...ak,...k,...bk->...ab", ev.spectral.frames, lifted, np.conj(ev.spectral.frames)))

    if spec.mode == "dirichlet":
        rhs = -ev.residual
        du = _solve_linear_interval(spec.geometry, C, np.zeros(spec.geometry.grid_shape), rhs)
        return du, 0.0, 1, lift_count

    if state.t > 0.0:
        psi_t = state.t * ctx.H + (1.0 - state.t) * spec.psi.values
        zero_order = state.t * np.exp(state.t * state.u.values) * psi_t
        du, _, its = _solve_linear_torus(ctx, C, zero_order, -ev.residual, rtol)
        return du, 0.0, its, lift_count

    bcol = -math.exp(state.b) * spec.psi.values
    du, db, its = _solve_linear_torus(ctx, C, np.zeros(spec.geometry.grid_shape),
                                      -ev.residual, rtol, b_column=bcol)
    return du, db, its, lift_count


def _line_search(ctx: _Context, state: SolveState, ev: _Evaluation, du: np.ndarray,
                 db: float, damping: float) -> tuple[SolveState, _Evaluation, float]:
    """Backtracking: admissible everywhere and strictly smaller max-norm residual."""
    alpha = damping
    worst = None
    while alpha >= LINE_SEARCH_FLOOR:
        trial = replace(
            state,
            u=ScalarField(state.u.geometry, state.u.values + alpha * du),
            b=state.b + alpha * db,
        )
        ev_trial = _evaluate(ctx, trial)
        if ev_trial.admissible and ev_trial.max_norm < ev.max_norm:
            trial.admissibility_margin = ev_trial.margin
            return trial, ev_trial, alpha
        worst = ev_trial.worst_point if not ev_trial.admissible else worst
        alpha *= 0.5
    raise NewtonStall(
        f"line search exhausted below {LINE_SEARCH_FLOOR}",
        worst_point=worst, state=state)


def newton_step(spec: ProblemSpec, state: SolveState, damping: float = 1.0,
                rtol: float = 1e-10) -> SolveState:
    """One damped Newton step; the returned iterate is admissible with a
    strictly smaller max-norm residual (or the current state at a fixed point)."""
    ctx = _context(spec, A=state.homotopy_A) if spec.mode == "periodic_constant" else _context(spec)
    if state.homotopy_H is not None:
        ctx.H = state.homotopy_H.values
    ev = _evaluate(ctx, state)
    if not ev.admissible:
        raise AdmissibilityError("current iterate is inadmissible",
                                 where=ev.worst_point, margin=ev.margin)
    if ev.max_norm == 0.0:
        state.admissibility_margin = ev.margin
        return state
    du, db, its, lifted = _newton_direction(ctx, state, ev, rtol)
    new_state, ev_new, _ = _line_search(ctx, state, ev, du, db, damping)
    new_state.linear_iterations = state.linear_iterations + its
    new_state.newton_iterations = state.newton_iterations + 1
    new_state.residual_history = state.residual_history + [
        (state.t, new_state.newton_iterations, ev_new.max_norm)]
    if lifted:
        new_state.warnings = state.warnings + [
            f"degenerate ellipticity lift applied at {lifted} directions"]
    return new_state


def _newton_solve(ctx: _Context, state: SolveState, tol: float, max_iter: int,
                  damping: float = 1.0) -> tuple[SolveState, _Evaluation, bool]:
    ev = _evaluate(ctx, state)
    if not ev.admissible:
        raise AdmissibilityError("initial iterate is inadmissible",
                                 where=ev.worst_point, margin=ev.margin)
    state.admissibility_margin = ev.margin
    state.residual_history = state.residual_history + [(state.t, 0, ev.max_norm)]
    for it in range(1, max_iter + 1):
        if ev.max_norm <= tol:
            return state, ev, True
        rtol = min(1e-4, max(1e-13, 0.05 * ev.max_norm / (1.0 + ev.max_norm)))
        try:
            du, db, its, lifted = _newton_direction(ctx, state, ev, rtol)
            state, ev, _ = _line_search(ctx, state, ev, du, db, damping)
        except (NewtonStall, LinearSolveFailure):
            return state, ev, False
        state.linear_iterations += its
        state.newton_iterations += 1
        state.residual_history = state.residual_history + [(state.t, it, ev.max_norm)]
        if lifted and not any("degenerate" in w for w in state.warnings):
            state.warnings = state.warnings + [
                f"degenerate ellipticity lift applied at {lifted} directions"]
    return state, ev, ev.max_norm <= tol


# -- continuation driver ---------------------------------------------------------

def _bound_entry(ctx: _Context, state: SolveState) -> dict | None:
    """Track the continuation sup/inf bounds when the logs are defined."""
    t = state.t
    if t <= 0.0 or ctx.H is None:
        return None
    psi_t = t * ctx.H + (1.0 - t) * ctx.spec.psi.values
    if np.min(ctx.H) <= 0 or np.min(ctx.F0) <= 0 or np.min(psi_t) <= 0:
        return None
    sup_u = float(state.u.values.max())
    inf_u = float(state.u.values.min())
    upper_const = float(np.max(np.log(ctx.H / psi_t)))
    lower_const = float(np.min(np.log(ctx.F0 / psi_t)))
    entry = {
        "t": t,
        "t_sup_u": t * sup_u,
        "upper_const": upper_const,
        "t_inf_u": t * inf_u,
        "lower_const": lower_const,
        "upper_ok": (sup_u < 0) or (t * sup_u <= upper_const + BOUND_SLACK),
        "lower_ok": (inf_u > 0) or (t * inf_u >= lower_const - BOUND_SLACK),
    }
    return entry


def homotopy_solve(spec: ProblemSpec, newton_tol: float = NEWTON_TOL,
                   t_floor: float = 1e-4, dt_init: float = 0.25, dt_min: float = 1e-4,
                   max_newton: int = 12, damping: float = 1.0) -> SolveState:
    """Continuation solve of the closed-geometry problem with unknown constant.

    Starts at t = 1 where the zero function is exact by construction of the
    deformed right-hand side, marches t down (halving the step on failure,
    growing it 1.5x on fast convergence, floor 1e-4), then switches to the
    (u, b) system with a mean-zero gauge and finishes with sup u = 0.
    """
    validate_problem(spec)
    if spec.mode != "periodic_constant":
        raise ConfigurationError("continuation drives the closed-geometry mode only")
    ctx = _context(spec)
    geom = spec.geometry

    state = SolveState(
        u=hf.scalar_constant(geom, 0.0),
        b=0.0,
        t=1.0,
        homotopy_A=ctx.A,
        homotopy_H=ScalarField(geom, ctx.H.copy()),
    )
    ev = _evaluate(ctx, state)
    state.admissibility_margin = ev.margin
    state.residual_history.append((1.0, 0, ev.max_norm))
    if ev.max_norm > 1e-12:
        state.warnings.append(f"start residual {ev.max_norm:.3e} above 1e-12")
    entry = _bound_entry(ctx, state)
    if entry:
        state.bound_track.append(entry)

    dt = dt_init
    while state.t > t_floor:
        t_next = max(t_floor, state.t - dt)
        trial = replace(state, t=t_next, residual_history=list(state.residual_history),
                        bound_track=list(state.bound_track), warnings=list(state.warnings))
        trial, ev, ok = _newton_solve(ctx, trial, newton_tol, max_newton, damping)
        if ok:
            state = trial
            entry = _bound_entry(ctx, state)
            if entry:
                state.bound_track.append(entry)
                if not (entry["upper_ok"] and entry["lower_ok"]):
                    state.warnings.append(f"continuation bound exceeded at t={state.t}")
            if state.residual_history[-1][1] <= 4:
                dt = min(dt * 1.5, 0.5)
        else:
            dt *= 0.5
            if dt < dt_min:
                raise HomotopyStall(f"step floor {dt_min} reached at t={state.t}", state=state)

    # switch to the explicit constant: mean-zero gauge, then Newton on (u, b)
    u0 = state.u.values - state.u.values.mean()
    state = replace(state, u=ScalarField(geom, u0), t=0.0)
    g = hf.assemble_g(state.u, spec.X)
    vals = hf.operator_values(spec.operator, hf.spectral_decompose(g))
    psi = spec.psi.values
    eb = float(np.sum(vals * psi) / np.sum(psi * psi))
    state.b = math.log(eb) if eb > 0 else 0.0
    state, ev, ok = _newton_solve(ctx, state, newton_tol, 4 * max_newton, damping)
    if not ok:
        raise HomotopyStall("final (u, b) stage did not converge", state=state)

    # sup-zero normalization: a constant shift leaves the t = 0 residual unchanged
    shift = float(state.u.values.max())
    state = replace(state, u=ScalarField(geom, state.u.values - shift))
    ev = _evaluate(ctx, state)
    state.admissibility_margin = ev.margin
    state.converged = ev.max_norm <= 10 * newton_tol
    return state


def dirichlet_solve(spec: ProblemSpec, newton_tol: float = NEWTON_TOL,
                    max_newton: int = 60, damping: float = 1.0) -> SolveState:
    """Newton solve of the interval boundary-value problem from a subsolution."""
    validate_problem(spec)
    if spec.mode != "dirichlet":
        raise ConfigurationError("dirichlet_solve requires dirichlet mode")
    if spec.subsolution is None:
        raise ConfigurationError("a subsolution is required", field_path="problem.subsolution")
    geom = spec.geometry
    ub = spec.subsolution.values.copy()
    if abs(ub[0] - spec.phi[0]) > 1e-9 or abs(ub[-1] - spec.phi[1]) > 1e-9:
        raise ConfigurationError("subsolution does not match the boundary data",
                                 field_path="problem.subsolution")
    ub[0], ub[-1] = spec.phi
    ctx = _context(spec)
    start = SolveState(u=ScalarField(geom, ub), t=0.0)
    ev = _evaluate(ctx, start)
    if not ev.admissible:
        raise ConfigurationError(
            f"subsolution is inadmissible at grid point {ev.worst_point} "
            f"(margin {ev.margin:.3e})", field_path="problem.subsolution")
    if float((ev.values - spec.psi.values).min()) < -1e-9:
        raise ConfigurationError(
            "subsolution does not dominate psi (not a discrete subsolution)",
            field_path="problem.subsolution")

    state, ev, ok = _newton_solve(ctx, start, newton_tol, max_newton, damping)
    if not ok:
        raise NewtonStall("dirichlet Newton did not converge", state=state)
    state.converged = True
    comparison = float((state.u.values - spec.subsolution.values).min())
    if comparison < -1e-10:
        state.warnings.append(f"comparison with the subsolution violated by {comparison:.2e}")
    return state


# -- auxiliary quasilinear barrier problem --------------------------------------

@dataclass
class BarrierResult:
    h: ScalarField | None
    nonexistence: bool
    w_min: float
    cross_check_gap: float | None
    growth_record: tuple[float, float]


def barrier_solve(geometry: Interval, rho: tuple[float, float] = (0.0, 0.0),
                  b: float = 0.0) -> BarrierResult:
    """Solve h'' + |h'|^2 + b = 0 with zero boundary data, or certify nonexistence.

    The exponential substitution w = e^h turns the problem into the linear
    equation w'' + b w = 0 with unit boundary data; a nonpositive w certifies
    that b sits at or above the first Dirichlet eigenvalue and no solution
    exists.  A direct damped-Newton solve of the quasilinear form provides an
    independent cross-check when the solution exists.
    """
    m = geometry.points
    h2 = geometry.spacing**2
    ab = np.zeros((3, m))
    ab[1, :] = -2.0 / h2 + b
    ab[0, 1:] = 1.0 / h2
    ab[2, :-1] = 1.0 / h2
    ab[1, 0] = ab[1, -1] = 1.0
    ab[0, 1] = 0.0
    ab[2, -2] = 0.0
    rhs = np.zeros(m)
    rhs[0] = rhs[-1] = 1.0
    try:
        w = scipy.linalg.solve_banded((1, 1), ab, rhs)
    except scipy.linalg.LinAlgError:
        return BarrierResult(h=None, nonexistence=True, w_min=-math.inf,
                             cross_check_gap=None, growth_record=rho)
    w_min = float(w.min())
    if not np.all(np.isfinite(w)) or w_min <= 1e-12:
        return BarrierResult(h=None, nonexistence=True, w_min=w_min,
                             cross_check_gap=None, growth_record=rho)
    h_exp = ScalarField(geometry, np.log(w))
    h_newton = _barrier_newton(geometry, b)
    gap = None
    if h_newton is not None:
        gap = float(np.abs(h_newton - h_exp.values).max())
    return BarrierResult(h=h_exp, nonexistence=False, w_min=w_min,
                         cross_check_gap=gap, growth_record=rho)


def _barrier_newton(geometry: Interval, b: float, tol: float = 1e-12,
                    max_iter: int = 60) -> np.ndarray | None:
    """Damped Newton on the quasilinear barrier equation itself."""
    m = geometry.points
    h = geometry.spacing
    # residual evaluation cancels 1/h^2-sized terms, so the achievable
    # max-norm floor scales with eps / h^2
    floor_tol = max(tol, 200.0 * np.finfo(float).eps / h**2)
    x = np.zeros(m)

    def resid(v):
        r = np.zeros(m)
        d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        d1 = (v[2:] - v[:-2]) / (2 * h)
        r[1:-1] = d2 + d1 * d1 + b
        r[0] = v[0]
        r[-1] = v[-1]
        return r

    r = resid(x)
    for _ in range(max_iter):
        if np.abs(r).max() <= floor_tol:
            return x
        d1 = np.zeros(m)
        d1[1:-1] = (x[2:] - x[:-2]) / (2 * h)
        ab = np.zeros((3, m))
        ab[1, 1:-1] = -2.0 / h**2
        ab[0, 2:] = 1.0 / h**2 + d1[1:-1] / h
        ab[2, :-2] = 1.0 / h**2 - d1[1:-1] / h
        ab[1, 0] = ab[1, -1] = 1.0
        try:
            step = scipy.linalg.solve_banded((1, 1), ab, -r)
        except scipy.linalg.LinAlgError:
            return None
        alpha = 1.0
        while alpha >= 2.0**-20:
            trial = x + alpha * step
            rt = resid(trial)
            if np.abs(rt).max() < np.abs(r).max():
                x, r = trial, rt
                break
            alpha *= 0.5
        else:
            break  # roundoff floor of the max norm
    return x if np.abs(r).max() <= floor_tol else None


def riccati_oracle(geometry: Interval) -> ScalarField:
    """Exact fixture log(cos x): satisfies h'' + (h')^2 + 1 = 0 identically.

    Verified by substitution: h' = -tan x, h'' = -sec^2 x, and
    -sec^2 x + tan^2 x + 1 = 0.
    """
    guard = 0.05
    if geometry.a < -math.pi / 2 + guard - 1e-12 or geometry.b > math.pi / 2 - guard + 1e-12:
        raise ConfigurationError(
            f"grid must stay {guard} away from the poles at +-pi/2",
            field_path="geometry")
    return ScalarField(geometry, np.log(np.cos(geometry.x)))


# -- manufacturing -------------------------------------------------------------

def mms_generate(geometry: Geometry, operator: OperatorSpec, u_star: ScalarField,
                 X: HermitianField) -> ProblemSpec:
    """Build the problem whose exact discrete solution is the given field.

    psi is the operator applied to the assembled form of u_star; on the
    interval the boundary data and a valid subsolution (u_star itself) are
    attached.
    """
    g = hf.assemble_g(u_star, X)
    s = hf.spectral_decompose(g)
    margins = hf.operator_margin(operator, s)
    mmin = float(margins.min())
    if mmin <= 0.0:
        worst = np.unravel_index(int(np.argmin(margins)), geometry.grid_shape)
        raise ConfigurationError(
            f"u_star is inadmissible at grid point {worst} (margin {mmin:.3e})",
            field_path="problem.psi.u_star")
    psi = ScalarField(geometry, np.asarray(hf.operator_values(operator, s)))
    if isinstance(geometry, Interval):
        return ProblemSpec(
            geometry=geometry, operator=operator, X=X, psi=psi, mode="dirichlet",
            phi=(float(u_star.values[0]), float(u_star.values[-1])),
            subsolution=u_star.copy(),
        )
    return ProblemSpec(geometry=geometry, operator=operator, X=X, psi=psi,
                       mode="periodic_constant")


def solve_report(state: SolveState, validation: dict | None = None) -> dict:
    """Structured document of a solve: history, constants, bound tracking."""
    return {
        "converged": state.converged,
        "b": state.b,
        "t": state.t,
        "admissibility_margin": state.admissibility_margin,
        "newton_iterations": state.newton_iterations,
        "linear_iterations": state.linear_iterations,
        "residual_history": [[float(t), int(i), float(r)] for t, i, r in state.residual_history],
        "bound_track": state.bound_track,
        "homotopy_A": state.homotopy_A,
        "warnings": list(state.warnings),
        "validation": validation or {},
    }
