"""Empirical verification of the interior estimates on solved instances.

The theory bounds continuum quantities with constants that depend on data
never enumerated quantitatively, so the harness certifies two observable
properties instead: every measured ratio is finite, and for a fixed
continuous instance the ratios stabilize under grid refinement (max/min
over the three finest levels at most 2).

Measured quantities over geodesic balls (Euclidean balls modulo the lattice
on the torus, radius capped at a quarter period so they stay embedded):

* c2_ratio      sup over the half ball of the metric operator norm of the
                complex Hessian, times r^2 / (1 + global oscillation);
* grad_ratio    |complex gradient|^2 at its half-ball argmax x*, times
                r^2 / (1 + sup over the ball of u - u(x*));
* harnack_ratio sup/inf over the half ball, for fields positive on the ball;
* osc_ratio     global oscillation over the squared diameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hermfield as hf
from .errors import DomainError
from .hermfield import FlatTorus, Geometry, Interval, ScalarField


def _as_field(state_or_field) -> ScalarField:
    if isinstance(state_or_field, ScalarField):
        return state_or_field
    u = getattr(state_or_field, "u", None)
    if isinstance(u, ScalarField):
        return u
    raise DomainError("expected a scalar field or a solve state carrying one")


def ball_mask(geometry: Geometry, center, radius: float) -> np.ndarray:
    """Boolean grid mask of the geodesic ball; the ball must stay embedded."""
    if radius <= 0:
        raise DomainError("ball radius must be positive")
    if isinstance(geometry, Interval):
        c = float(np.atleast_1d(center)[0])
        if c - radius < geometry.a - 1e-12 or c + radius > geometry.b + 1e-12:
            raise DomainError("ball leaves the interval")
        return np.abs(geometry.x - c) <= radius + 1e-12
    if radius > 0.25 + 1e-12:
        raise DomainError("torus ball radius is capped at a quarter period")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    axes = 2 * geometry.n
    if center.size != axes:
        raise DomainError(f"center needs {axes} coordinates")
    dist2 = np.zeros(geometry.grid_shape)
    for a in range(axes):
        d = np.abs(geometry.axis_coordinates(a) - center[a]) % 1.0
        d = np.minimum(d, 1.0 - d)
        dist2 = dist2 + d * d
    return dist2 <= radius * radius + 1e-12


def measure_c2(state_or_field, center, radius: float) -> float:
    """Half-ball supremum of the Hessian operator norm, scaled by r^2/(1+osc)."""
    u = _as_field(state_or_field)
    geom = u.geometry
    inner = ball_mask(geom, center, radius / 2)
    H = hf.complex_hessian(u)
    eigs = hf.spectral_decompose(H).eigenvalues
    opnorm = np.abs(eigs).max(axis=-1)
    osc = float(u.values.max() - u.values.min())
    return float(opnorm[inner].max()) * radius**2 / (1.0 + osc)


def measure_gradient(state_or_field, center, radius: float) -> float:
    """Pointwise gradient bound ratio evaluated at the half-ball argmax."""
    u = _as_field(state_or_field)
    geom = u.geometry
    inner = ball_mask(geom, center, radius / 2)
    outer = ball_mask(geom, center, radius)
    gsq = hf.gradient_squared(u).values
    masked = np.where(inner, gsq, -np.inf)
    flat = int(np.argmax(masked))
    star = np.unravel_index(flat, geom.grid_shape)
    sup_ball = float(u.values[outer].max())
    return float(gsq[star]) * radius**2 / (1.0 + sup_ball - float(u.values[star]))


def measure_harnack(state_or_field, center, radius: float) -> float | None:
    """sup/inf over the half ball for positive fields; None when u touches 0."""
    u = _as_field(state_or_field)
    geom = u.geometry
    outer = ball_mask(geom, center, radius)
    if float(u.values[outer].min()) <= 0.0:
        return None
    inner = ball_mask(geom, center, radius / 2)
    vals = u.values[inner]
    return float(vals.max() / vals.min())


def osc_ratio(state_or_field) -> float:
    u = _as_field(state_or_field)
    d = u.geometry.diameter
    return float(u.values.max() - u.values.min()) / (d * d)


RATIO_NAMES = ("c2_ratio", "grad_ratio", "harnack_ratio", "osc_ratio")


@dataclass
class EstimateReport:
    """Measured estimate ratios per refinement level with stability flags."""

    instance_id: str
    levels: list[int]
    ratios: dict  # level -> {name: value or None}
    stability: dict = field(default_factory=dict)  # name -> bool or None
    ball: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "levels": list(self.levels),
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "stability": self.stability,
            "ball": self.ball,
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        lines = ["level,ratio,value"]
        for level in self.levels:
            for name in RATIO_NAMES:
                v = self.ratios[level].get(name)
                lines.append(f"{level},{name},{'' if v is None else repr(v)}")
        return "\n".join(lines) + "\n"


def measure_all(state_or_field, center, radius: float) -> dict:
    return {
        "c2_ratio": measure_c2(state_or_field, center, radius),
        "grad_ratio": measure_gradient(state_or_field, center, radius),
        "harnack_ratio": measure_harnack(state_or_field, center, radius),
        "osc_ratio": osc_ratio(state_or_field),
    }


def build_report(instance_id: str, solved_levels, center, radius: float) -> EstimateReport:
    """Measure all ratios across refinement levels and flag their stability.

    ``solved_levels`` is a list of (level, field-or-state) pairs; stability
    requires max/min <= 2 over the three finest levels for every ratio that
    is measured there (harnack entries of None are hypothesis failures, not
    instabilities, and yield a None flag).
    """
    levels = [lv for lv, _ in solved_levels]
    ratios = {lv: measure_all(obj, center, radius) for lv, obj in solved_levels}
    finest = sorted(levels)[-3:]
    stability: dict = {}
    for name in RATIO_NAMES:
        vals = [ratios[lv][name] for lv in finest]
        if any(v is None for v in vals):
            stability[name] = None
            continue
        if any(not np.isfinite(v) for v in vals):
            stability[name] = False
            continue
        lo, hi = min(vals), max(vals)
        stability[name] = bool(hi <= 2.0 * lo) if lo > 0 else bool(hi <= 1e-12)
    return EstimateReport(
        instance_id=instance_id,
        levels=levels,
        ratios=ratios,
        stability=stability,
        ball={"center": list(np.atleast_1d(center).astype(float)), "radius": radius},
    )
