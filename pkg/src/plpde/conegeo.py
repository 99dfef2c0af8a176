"""Admissibility cones, level-set sampling, and tangent-cone rank probes.

The rank machinery never materializes the asymptotic cone attached to a
level set of a concave symmetric function.  It shoots rays whose coordinates
diverge along coordinate subsets while staying on the level set (for a
transverse displacement ``s * e_J`` the point is pulled back to the level
set by solving for the diagonal offset), and reads off the limiting unit
normals.  The minimum count of nonzero normal components over all rays is
the estimated rank; the sorted-gradient ratio of the smallest partials gives
a lower bound for the uniform-ellipticity constant.

``rank_probe`` probes the operator as a function of the eigenvalue vector
(the composite with the partial-sum map); ``rank_condition_check`` and
``c1_estimate`` probe the family on its own N-dimensional domain, which is
the space the rank threshold and the linearized-coefficient inequality
refer to.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import symcalc
from .errors import AdmissibilityError, DomainError, ProbeInconclusive
from .runtime import thread_count
from .symcalc import OperatorSpec

NORMAL_ZERO_TOL = 1e-6       # relative cutoff for "nonzero component of a normal"
NORMAL_CONVERGENCE_TOL = 1e-4
C1_FLAG_FLOOR = 1e-8
class Membership(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class ConeSpec:
    """One of the catalogued admissibility cones.

    ``garding(k, dim)`` is the order-k cone cut out by the first k elementary
    symmetric functions; ``partial(K, n)`` collects eigenvalue vectors whose
    every K-term partial sum is positive; ``operator_domain(spec)`` is the
    pullback of the operator family's cone under the partial-sum map.
    """

    kind: str
    k: int = 0
    dim: int = 0
    operator: OperatorSpec | None = None

    @staticmethod
    def garding(k: int, dim: int) -> "ConeSpec":
        if not (1 <= k <= dim):
            raise DomainError(f"need 1 <= k <= dim, got k={k}, dim={dim}")
        return ConeSpec(kind="garding", k=k, dim=dim)

    @staticmethod
    def partial(K: int, n: int) -> "ConeSpec":
        if not (1 <= K <= n):
            raise DomainError(f"need 1 <= K <= n, got K={K}, n={n}")
        return ConeSpec(kind="partial", k=K, dim=n)

    @staticmethod
    def operator_domain(spec: OperatorSpec) -> "ConeSpec":
        return ConeSpec(kind="operator", dim=spec.n, operator=spec)


def cone_values(spec: ConeSpec, lam) -> np.ndarray:
    """Values of the defining inequalities of the cone at lam."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != spec.dim:
        raise DomainError(f"vector has length {lam.shape[-1]}, cone expects {spec.dim}")
    if spec.kind == "garding":
        return symcalc.elementary_symmetric(spec.k, lam)[..., 1:]
    if spec.kind == "partial":
        fam = symcalc.enumerate_index_sets(spec.dim, spec.k)
        return symcalc.lambda_map(lam, fam)
    return symcalc.domain_values(spec.operator, symcalc.lambda_beta(spec.operator, lam))


def cone_membership(spec: ConeSpec, lam, tol: float | None = None) -> Membership:
    """Interior / boundary / outside classification with a scaled tolerance."""
    lam = np.asarray(lam, dtype=float)
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.linalg.norm(lam)))
    vals = cone_values(spec, lam)
    lo = float(vals.min())
    if lo > tol:
        return Membership.INTERIOR
    if lo >= -tol:
        return Membership.BOUNDARY
    return Membership.OUTSIDE


@dataclass(frozen=True)
class LevelSetSample:
    """A point of the level hypersurface with its outward unit normal."""

    point: np.ndarray
    normal: np.ndarray
    support_value: float
    f_value: float
    magnitude: float


@dataclass(frozen=True)
class AboveLevel:
    """Marker for a ray on which the function never drops to the level."""

    direction: np.ndarray
    magnitude: float


@dataclass(frozen=True)
class _ProbeTarget:
    """Scalar concave symmetric function restricted to its domain cone.

    ``scaling`` records how the function transforms under radial scaling:
    ``"linear"`` for degree-one homogeneity (up to the additive shift) and
    ``"log"`` when scaling adds ``logdim * log(c)``.  Either way a point
    strictly inside the positive orthant projects exactly onto any level set.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    margin: Callable[[np.ndarray], float]
    scaling: str
    shift: float
    logdim: int


def _family_target(spec: OperatorSpec) -> _ProbeTarget:
    return _ProbeTarget(
        dim=spec.N,
        value=lambda w: float(symcalc.f_eval(spec, w)),
        grad=lambda w: symcalc.f_grad(spec, w),
        margin=lambda w: float(symcalc.domain_values(spec, w).min()),
        scaling="log" if spec.family == "logprod" else "linear",
        shift=spec.level_shift,
        logdim=spec.N,
    )


def _composite_target(spec: OperatorSpec) -> _ProbeTarget:
    return _ProbeTarget(
        dim=spec.n,
        value=lambda lam: float(symcalc.composite_eval(spec, lam)),
        grad=lambda lam: symcalc.composite_grad(spec, lam),
        margin=lambda lam: float(symcalc.composite_margin(spec, lam)),
        scaling="log" if spec.family == "logprod" else "linear",
        shift=spec.level_shift,
        logdim=spec.N,
    )


def _check_level(target: _ProbeTarget, sigma: float) -> None:
    if target.scaling == "linear" and sigma <= target.shift:
        raise DomainError(
            f"level {sigma} at or below the boundary supremum {target.shift} of the family"
        )


def _project_shape(target: _ProbeTarget, sigma: float,
                   shape: np.ndarray) -> np.ndarray | None:
    """Scale a unit-sup-norm admissible shape exactly onto the level set."""
    try:
        if target.margin(shape) <= 0.0:
            return None
        fval = target.value(shape)
    except AdmissibilityError:
        return None
    if target.scaling == "linear":
        denom = fval - target.shift
        if denom <= 0.0:
            return None
        return (sigma - target.shift) / denom * shape
    return float(np.exp((sigma - fval) / target.logdim)) * shape


def _ray_sample(target: _ProbeTarget, sigma: float, d: np.ndarray,
                s: float) -> LevelSetSample | AboveLevel:
    """Level-set point of sup-norm ~ s obtained by displacing the diagonal by d.

    The displaced ray ones + s'*d is reduced to its shape (sup-norm one) and
    scaled exactly back onto the level set; by homogeneity the sample's
    sup-norm is a monotone function of the shape alone, so the displacement
    s' matching the requested magnitude is found by bisection on unit-scale
    evaluations, immune to overflow and cancellation.
    """
    def shape_of(disp: float) -> np.ndarray:
        mu = np.ones(target.dim) + disp * d
        return mu / mu.max()

    def sup_norm_from_shape(shape: np.ndarray) -> float | None:
        # |point|_inf of the projected shape; None when the shape is inadmissible
        try:
            if target.margin(shape) <= 0.0:
                return None
            fval = target.value(shape)
        except AdmissibilityError:
            return None
        if target.scaling == "linear":
            denom = fval - target.shift
            if denom <= 0.0:
                return None
            return (sigma - target.shift) / denom
        return float(np.exp((sigma - fval) / target.logdim))

    if s == 0.0 or not np.any(d):
        point = _project_shape(target, sigma, np.ones(target.dim))
    else:
        base = sup_norm_from_shape(shape_of(0.0))
        if base is None:
            return AboveLevel(direction=d.copy(), magnitude=s)
        if s <= base:
            point = _project_shape(target, sigma, shape_of(0.0))
        else:
            # sup norm grows monotonically along the ray; bisect in log-displacement
            lo, hi = 1e-9, 1e60
            top = sup_norm_from_shape(shape_of(hi))
            if top is not None and top < s:
                # interior ray: the projected point stays bounded below the
                # requested magnitude; sample its settled far configuration
                point = _project_shape(target, sigma, shape_of(hi))
            else:
                for _ in range(60):
                    mid = float(np.sqrt(lo * hi))
                    val = sup_norm_from_shape(shape_of(mid))
                    if val is None or val >= s:
                        hi = mid
                    else:
                        lo = mid
                point = _project_shape(target, sigma, shape_of(hi))
    if point is None:
        return AboveLevel(direction=d.copy(), magnitude=s)

    g = target.grad(point)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        raise ProbeInconclusive("vanishing gradient on the level set")
    normal = g / norm
    return LevelSetSample(
        point=point,
        normal=normal,
        support_value=float(normal @ point),
        f_value=float(target.value(point)),
        magnitude=s,
    )


def level_set_sample(spec: OperatorSpec, sigma: float, direction, count: int,
                     max_magnitude: float = 1e3) -> list[LevelSetSample | AboveLevel]:
    """Sample the family's level hypersurface along a ray of displacements.

    The first sample is the diagonal point; subsequent samples displace it by
    geometrically growing multiples of ``direction`` and project back to the
    level set along the diagonal.
    """
    target = _family_target(spec)
    _check_level(target, sigma)
    d = np.asarray(direction, dtype=float)
    if d.shape != (target.dim,):
        raise DomainError(f"direction has shape {d.shape}, expected ({target.dim},)")
    nd = float(np.linalg.norm(d))
    if nd > 0.0:
        d = d / nd
    if count < 1:
        raise DomainError("count must be >= 1")

    out: list[LevelSetSample | AboveLevel] = []
    magnitudes = [0.0]
    if count > 1 and nd > 0.0:
        magnitudes += list(np.geomspace(1.0, max_magnitude, count - 1))
    elif count > 1:
        magnitudes += [0.0] * (count - 1)
    for s in magnitudes:
        out.append(_ray_sample(target, sigma, d, s))
    return out


@dataclass
class RayProbe:
    """Audit record of one coordinate-subset ray."""

    subset: tuple[int, ...]
    magnitudes: list[float]
    normals: list[np.ndarray]
    support_values: list[float]
    convergence_gap: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "magnitudes": self.magnitudes,
            "normals": [n.tolist() for n in self.normals],
            "support_values": self.support_values,
            "convergence_gap": self.convergence_gap,
            "rank": self.rank,
        }


@dataclass
class RankCertificate:
    """Numerical evidence for the rank of the tangent cone at infinity.

    This is sampled evidence, not a proof: probe rays are restricted to
    coordinate-subset directions, which suffices for the catalogued
    symmetric families but is recorded as an assumption.
    """

    ambient_dim: int
    sigma: float
    estimated_rank: int
    limiting_normals: list[np.ndarray]
    c1_lower_bound: float
    threshold_checked: float
    passes_condition: bool
    zero_tol: float
    rays: list[RayProbe] = field(default_factory=list)
    assumptions: tuple[str, ...] = (
        "probe rays restricted to coordinate-subset directions",
        "normals certified by sampling, not by proof",
    )

    def to_dict(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "sigma": self.sigma,
            "estimated_rank": self.estimated_rank,
            "limiting_normals": [n.tolist() for n in self.limiting_normals],
            "c1_lower_bound": self.c1_lower_bound,
            "threshold_checked": self.threshold_checked,
            "passes_condition": self.passes_condition,
            "zero_tol": self.zero_tol,
            "assumptions": list(self.assumptions),
            "rays": [r.to_dict() for r in self.rays],
        }


def _normal_rank(normal: np.ndarray, zero_tol: float) -> int:
    return int(np.sum(normal > zero_tol * normal.max()))


def _proper_subsets(dim: int) -> list[tuple[int, ...]]:
    subsets = []
    for size in range(1, dim):
        subsets.extend(itertools.combinations(range(dim), size))
    return subsets


def _c1_ratio(grad: np.ndarray, rank: int) -> float:
    g = np.sort(grad)
    total = float(g.sum())
    if total <= 0.0:
        return 0.0
    keep = len(g) - rank + 1
    return float(g[:keep].sum()) / total


def _probe_rays(target: _ProbeTarget, sigma: float, magnitudes, subsets,
                zero_tol: float) -> tuple[list[RayProbe], list[LevelSetSample]]:
    diag_sample = _ray_sample(target, sigma, np.zeros(target.dim), 0.0)
    samples: list[LevelSetSample] = [diag_sample] if isinstance(diag_sample, LevelSetSample) else []

    def probe_one(subset):
        d = np.zeros(target.dim)
        d[list(subset)] = 1.0
        normals, supports, local_samples = [], [], []
        for s in magnitudes:
            sample = _ray_sample(target, sigma, d, float(s))
            if isinstance(sample, AboveLevel):
                raise ProbeInconclusive(
                    f"no level-set point on subset ray {subset} at magnitude {s}")
            normals.append(sample.normal)
            supports.append(sample.support_value)
            local_samples.append(sample)
        gap = float(np.max(np.abs(normals[-1] - normals[-2]))) if len(normals) > 1 else np.inf
        probe = RayProbe(
            subset=tuple(int(i) for i in subset),
            magnitudes=[float(s) for s in magnitudes],
            normals=normals,
            support_values=supports,
            convergence_gap=gap,
            rank=_normal_rank(normals[-1], zero_tol),
        )
        return probe, local_samples

    workers = thread_count()
    if workers > 1 and len(subsets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(probe_one, subsets))
    else:
        results = [probe_one(s) for s in subsets]

    rays = []
    for probe, local in results:
        rays.append(probe)
        samples.extend(local)
    return rays, samples


def rank_probe(spec: OperatorSpec, sigma: float, probe_magnitudes,
               ray_budget: int | None = None, zero_tol: float = NORMAL_ZERO_TOL) -> RankCertificate:
    """Certify the tangent-cone rank of the operator in eigenvalue space.

    Rays displace the diagonal level-set point along every proper coordinate
    subset with geometrically growing magnitudes; the normals along each ray
    must settle (max change <= 1e-4 between the two largest magnitudes) or the
    probe is inconclusive.
    """
    magnitudes = [float(s) for s in probe_magnitudes]
    if sorted(magnitudes) != magnitudes or len(magnitudes) < 2:
        raise DomainError("probe magnitudes must be increasing, at least two")
    if magnitudes[-1] < 1e6:
        raise DomainError("largest probe magnitude must be >= 1e6")
    target = _composite_target(spec)
    _check_level(target, sigma)

    threshold = spec.N * (spec.n - spec.K) / spec.n + 1.0
    if target.dim == 1:
        # one-dimensional level set: the only unit normal is (1,)
        normal = np.ones(1)
        return RankCertificate(
            ambient_dim=1, sigma=sigma, estimated_rank=1,
            limiting_normals=[normal], c1_lower_bound=1.0,
            threshold_checked=threshold, passes_condition=1 >= threshold,
            zero_tol=zero_tol,
        )

    subsets = _proper_subsets(target.dim)
    if ray_budget is not None and ray_budget < len(subsets):
        raise ProbeInconclusive(
            f"ray budget {ray_budget} below the {len(subsets)} coordinate-subset rays needed",
        )
    rays, samples = _probe_rays(target, sigma, magnitudes, subsets, zero_tol)

    worst_gap = max(r.convergence_gap for r in rays)
    if worst_gap > NORMAL_CONVERGENCE_TOL:
        raise ProbeInconclusive(
            f"normal sequence still moving by {worst_gap:.2e} between the last two magnitudes",
            partial=rays,
        )

    estimated_rank = min(r.rank for r in rays)
    c1 = min(_c1_ratio(target.grad(s.point), estimated_rank) for s in samples)
    if c1 < C1_FLAG_FLOOR:
        c1 = 0.0
    return RankCertificate(
        ambient_dim=target.dim,
        sigma=sigma,
        estimated_rank=estimated_rank,
        limiting_normals=[r.normals[-1] for r in rays],
        c1_lower_bound=c1,
        threshold_checked=threshold,
        passes_condition=estimated_rank >= threshold,
        zero_tol=zero_tol,
        rays=rays,
    )


@dataclass
class RankConditionResult:
    passes: bool
    threshold: float
    rank: int
    certificates: list[RankCertificate]

    def to_dict(self) -> dict:
        return {
            "passes": self.passes,
            "threshold": self.threshold,
            "rank": self.rank,
            "levels": [c.to_dict() for c in self.certificates],
        }


DEFAULT_PROBE_MAGNITUDES = (1e2, 1e3, 1e4, 1e5, 1e6)


def rank_condition_check(spec: OperatorSpec, probe_magnitudes=DEFAULT_PROBE_MAGNITUDES,
                         num_levels: int = 5, ray_budget: int | None = None) -> RankConditionResult:
    """Check the family's rank against the partial-sum threshold.

    The family is probed on its own N-dimensional domain at ``num_levels``
    geometrically spaced levels; the threshold N(n-K)/n + 1 comes from the
    original partial-sum dimensions.
    """
    ambient = spec.family_ambient()
    threshold = spec.N * (spec.n - spec.K) / spec.n + 1.0
    levels = [float(symcalc.f_diag(ambient, t)) for t in np.geomspace(0.25, 64.0, num_levels)]
    certificates = []
    for sigma in levels:
        cert = rank_probe(ambient, sigma, probe_magnitudes, ray_budget=ray_budget)
        cert.threshold_checked = threshold
        cert.passes_condition = cert.estimated_rank >= threshold
        certificates.append(cert)
    rank = min(c.estimated_rank for c in certificates)
    return RankConditionResult(
        passes=rank >= threshold,
        threshold=threshold,
        rank=rank,
        certificates=certificates,
    )


def c1_estimate(spec: OperatorSpec, sigma: float, rank: int,
                magnitudes_per_ray: int = 8, max_magnitude: float = 1e6) -> float:
    """Lower bound for the sum of the smallest family partials on the level set.

    With gradients sorted ascending the quantity is the minimum over samples
    of (sum of the first m-rank+1 partials) / (sum of all partials), sampled
    along coordinate-subset rays out to the requested magnitude.  A minimum
    below 1e-8 is flagged as 0 (condition violated or rank overstated).
    """
    target = _family_target(spec.family_ambient())
    _check_level(target, sigma)
    if not (1 <= rank <= target.dim):
        raise DomainError(f"rank {rank} outside 1..{target.dim}")
    if target.dim == 1:
        return 1.0
    magnitudes = np.geomspace(1.0, max_magnitude, magnitudes_per_ray)
    _, samples = _probe_rays(target, sigma, magnitudes, _proper_subsets(target.dim),
                             zero_tol=NORMAL_ZERO_TOL)
    c1 = min(_c1_ratio(target.grad(s.point), rank) for s in samples)
    return 0.0 if c1 < C1_FLAG_FLOOR else float(c1)


def c1_threshold_rank(spec: OperatorSpec) -> int:
    """Smallest rank for which the linearized-coefficient inequality chain holds."""
    return int(round(spec.N * (spec.n - spec.K) / spec.n)) + 1
