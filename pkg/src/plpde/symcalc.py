"""Symmetric-function calculus for partial-sum eigenvalue operators.

The operator layer works on two vectors: the eigenvalue vector ``lam`` of a
Hermitian form (length ``n``) and its image ``w = lambda_map(lam)`` under the
ordered partial-sum map (length ``N = C(n, K)``), formed by summing ``lam``
over every K-element index set in lexicographic order.  The catalogued
concave symmetric families act on ``w``:

* ``"sum"``      -- the linear functional ``sigma_1(w)``;
* ``"sigma"``    -- the normalized Hessian-type family ``sigma_k(w)**(1/k)``
                    on the Garding cone of order ``k``;
* ``"logprod"``  -- ``sum(log w_j)``, i.e. the logarithm of the product of
                    all K-term partial sums, on the positive orthant.

Elementary symmetric polynomials are evaluated with the characteristic
polynomial recurrence (a running convolution), never by subset enumeration,
so large dimensions stay stable; gradients come from the single-element
downdate of the same recurrence.  All evaluators broadcast over leading
batch axes so grid-sized inputs go through in one call.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import AdmissibilityError, DomainError

MAX_DIMENSION = 16

_FAMILIES = ("sum", "sigma", "logprod")


@dataclass(frozen=True, eq=False)
class IndexSetFamily:
    """All K-element strictly increasing index tuples from {1..n}, lex ordered."""

    n: int
    K: int
    sets: tuple[tuple[int, ...], ...]
    membership: np.ndarray = field(repr=False)  # (N, n) 0/1, membership[j, i-1] = i in I_j

    @property
    def N(self) -> int:
        return len(self.sets)

    @property
    def sets_per_index(self) -> int:
        # every index lies in exactly N*K/n = C(n-1, K-1) sets
        return self.N * self.K // self.n


@lru_cache(maxsize=None)
def enumerate_index_sets(n: int, K: int) -> IndexSetFamily:
    """Build the ordered family of K-element index sets of {1..n}."""
    if not (1 <= K <= n <= MAX_DIMENSION):
        raise DomainError(f"require 1 <= K <= n <= {MAX_DIMENSION}, got n={n}, K={K}")
    sets = tuple(itertools.combinations(range(1, n + 1), K))
    membership = np.zeros((len(sets), n))
    for j, idx in enumerate(sets):
        membership[j, [i - 1 for i in idx]] = 1.0
    membership.setflags(write=False)
    return IndexSetFamily(n=n, K=K, sets=sets, membership=membership)


def lambda_map(lam, family: IndexSetFamily) -> np.ndarray:
    """Partial-sum image: out[..., j] = sum of lam over the j-th index set."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != family.n:
        raise DomainError(f"eigenvalue vector has length {lam.shape[-1]}, family expects {family.n}")
    return lam @ family.membership.T


def lambda_prime(lam, family: IndexSetFamily) -> np.ndarray:
    """Complement partial sums; satisfies lambda_map + lambda_prime = sigma_1 * ones."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != family.n:
        raise DomainError(f"eigenvalue vector has length {lam.shape[-1]}, family expects {family.n}")
    total = lam.sum(axis=-1, keepdims=True)
    return total - lambda_map(lam, family)


def elementary_symmetric(k: int, v) -> np.ndarray:
    """e_0..e_k of v along the last axis, by the running-convolution recurrence."""
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    if not (0 <= k <= m):
        raise DomainError(f"need 0 <= k <= dim, got k={k}, dim={m}")
    e = np.zeros(v.shape[:-1] + (k + 1,))
    e[..., 0] = 1.0
    for j in range(m):
        x = v[..., j : j + 1]
        e[..., 1:] = e[..., 1:] + x * e[..., :-1]
    return e


def sigma_k(k: int, v) -> float | np.ndarray:
    """k-th elementary symmetric function of v (batched over leading axes)."""
    v = np.asarray(v, dtype=float)
    if not (1 <= k <= v.shape[-1]):
        raise DomainError(f"need 1 <= k <= dim, got k={k}, dim={v.shape[-1]}")
    out = elementary_symmetric(k, v)[..., k]
    return float(out) if out.ndim == 0 else out


def _esp_drop_one(v, r: int) -> np.ndarray:
    """e_r of v with one element removed, for every element: out[..., j] = e_r(v_{-j}).

    Runs the recurrence once per excluded index (vectorized over that index)
    instead of downdating e_r(v), which loses all accuracy when the dropped
    element dominates the rest.
    """
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    P = np.zeros(v.shape[:-1] + (m, r + 1))
    P[..., 0] = 1.0
    for i in range(m):
        x = v[..., i, None, None]
        keep = P[..., i, :].copy()
        P[..., 1:] = P[..., 1:] + x * P[..., :-1]
        P[..., i, :] = keep
    return P[..., r]


class RhoResult(NamedTuple):
    value: float
    in_domain: bool


def rho_k(k: int, lam) -> RhoResult:
    """Product of all k-term partial sums of lam; flagged when lam leaves P_k.

    Equals sigma_N applied to the partial-sum image, and specializes to
    rho_n = sigma_1 and rho_1 = prod(lam).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise DomainError("rho_k expects a single eigenvalue vector")
    fam = enumerate_index_sets(lam.shape[0], k)
    w = lambda_map(lam, fam)
    return RhoResult(value=float(np.prod(w)), in_domain=bool(np.all(w > 0.0)))


@dataclass(frozen=True)
class OperatorSpec:
    """Choice of symmetric family, its dimensions, and the deformation knobs.

    ``n`` and ``K`` fix the partial-sum structure (ambient family dimension
    N = C(n, K)); ``k`` is the order for the "sigma" family; ``beta >= 0``
    mixes in the complement sums, evaluated algebraically through
    ``(1+beta)*w - beta*sigma_1(lam)*ones``; ``level_shift`` is an additive
    normalization of the value only.
    """

    family: str
    n: int
    K: int
    k: int = 1
    beta: float = 0.0
    level_shift: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown family {self.family!r}, expected one of {_FAMILIES}")
        if not (1 <= self.K <= self.n <= MAX_DIMENSION):
            raise DomainError(f"require 1 <= K <= n <= {MAX_DIMENSION}, got n={self.n}, K={self.K}")
        if self.family == "sigma" and not (1 <= self.k <= self.N):
            raise DomainError(f"sigma order k={self.k} outside 1..N={self.N}")
        if self.beta < 0.0:
            raise DomainError("beta must be >= 0")

    @property
    def index_family(self) -> IndexSetFamily:
        return enumerate_index_sets(self.n, self.K)

    @property
    def N(self) -> int:
        return math.comb(self.n, self.K)

    @property
    def boundary_sup(self) -> float:
        """sup of f on the cone boundary: 0 for the homogeneous families, -inf for logprod."""
        if self.family == "logprod":
            return -math.inf
        return 0.0 + self.level_shift

    def family_ambient(self) -> "OperatorSpec":
        """Same family viewed on its own N-dimensional space (trivial partial sums)."""
        return OperatorSpec(family=self.family, n=self.N, K=1, k=self.k,
                            beta=0.0, level_shift=self.level_shift)


def domain_values(spec: OperatorSpec, w) -> np.ndarray:
    """Values of the defining inequalities of the family cone at w (last axis)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != spec.N:
        raise DomainError(f"Lambda vector has length {w.shape[-1]}, operator expects {spec.N}")
    if spec.family == "sum":
        return w.sum(axis=-1, keepdims=True)
    if spec.family == "logprod":
        return w
    return elementary_symmetric(spec.k, w)[..., 1:]


def _check_admissible(spec: OperatorSpec, w) -> np.ndarray:
    vals = domain_values(spec, w)
    worst = vals.min(axis=-1)
    if np.all(worst > 0.0):
        return w
    flat_vals = vals.reshape(-1, vals.shape[-1])
    p = int(np.argmin(worst.reshape(-1)))
    j = int(np.argmin(flat_vals[p]))
    names = {
        "sum": "sigma_1(Lambda) > 0",
        "logprod": f"Lambda[{j}] > 0",
        "sigma": f"sigma_{j + 1}(Lambda) > 0",
    }
    raise AdmissibilityError(
        f"point outside the domain cone of family {spec.family!r}: "
        f"violated {names[spec.family]} (worst value {float(flat_vals[p, j]):.3e})",
        constraint=names[spec.family],
        where=p if worst.ndim else None,
        margin=float(flat_vals[p, j]),
    )


def f_eval(spec: OperatorSpec, w) -> float | np.ndarray:
    """Value of the family at the partial-sum vector w (must lie in the cone)."""
    w = np.asarray(w, dtype=float)
    _check_admissible(spec, w)
    if spec.family == "sum":
        out = w.sum(axis=-1)
    elif spec.family == "logprod":
        out = np.log(w).sum(axis=-1)
    else:
        out = sigma_k(spec.k, w) ** (1.0 / spec.k)
    out = out + spec.level_shift
    return float(out) if np.ndim(out) == 0 else out


def f_grad(spec: OperatorSpec, w) -> np.ndarray:
    """Componentwise partials of the family at w; nonnegative on the cone."""
    w = np.asarray(w, dtype=float)
    _check_admissible(spec, w)
    if spec.family == "sum":
        return np.ones_like(w)
    if spec.family == "logprod":
        return 1.0 / w
    k = spec.k
    sk = sigma_k(k, w)
    partials = _esp_drop_one(w, k - 1)  # d sigma_k / d w_j = e_{k-1}(w_{-j})
    return (np.asarray(sk)[..., None] ** (1.0 / k - 1.0)) * partials / k


def f_hessian_action(spec: OperatorSpec, w, d) -> float:
    """Quadratic form d . D^2 f(w) . d; nonpositive by concavity."""
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    if w.ndim != 1 or d.shape != w.shape:
        raise DomainError("hessian action expects a single point and matching direction")
    _check_admissible(spec, w)
    if spec.family == "sum":
        return 0.0
    if spec.family == "logprod":
        return float(-np.sum(d * d / (w * w)))
    k = spec.k
    sk = float(sigma_k(k, w))
    grad_sk = _esp_drop_one(w, k - 1)
    dg = float(d @ grad_sk)
    if k < 2:
        quad = 0.0
    else:
        # second partials of sigma_k are e_{k-2} with both indices removed;
        # each pair gets its own stable recurrence (single-point use only)
        m = w.shape[0]
        q = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                rest = np.delete(w, (i, j))
                q[i, j] = q[j, i] = elementary_symmetric(k - 2, rest)[k - 2]
        quad = float(d @ (q @ d))
    a = 1.0 / k
    return a * sk ** (a - 1.0) * quad + a * (a - 1.0) * sk ** (a - 2.0) * dg * dg


def f_diag(spec: OperatorSpec, t) -> float | np.ndarray:
    """f along the diagonal ray, f(t * ones); strictly increasing in t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("diagonal evaluation requires t > 0")
    if spec.family == "sum":
        out = spec.N * t
    elif spec.family == "logprod":
        out = spec.N * np.log(t)
    else:
        out = math.comb(spec.N, spec.k) ** (1.0 / spec.k) * t
    out = out + spec.level_shift
    return float(out) if np.ndim(out) == 0 else out


# -- composite layer: the operator as a function of the eigenvalue vector ----

def lambda_beta(spec: OperatorSpec, lam) -> np.ndarray:
    """Deformed partial-sum vector (1+beta)*Lambda - beta*sigma_1(lam)*ones."""
    lam = np.asarray(lam, dtype=float)
    fam = spec.index_family
    w = lambda_map(lam, fam)
    if spec.beta == 0.0:
        return w
    return (1.0 + spec.beta) * w - spec.beta * lam.sum(axis=-1, keepdims=True)


def composite_margin(spec: OperatorSpec, lam) -> np.ndarray:
    """Min defining-inequality value of the cone at the deformed image of lam."""
    return domain_values(spec, lambda_beta(spec, lam)).min(axis=-1)


def composite_eval(spec: OperatorSpec, lam) -> float | np.ndarray:
    """f applied to the (deformed) partial-sum image of the eigenvalue vector."""
    return f_eval(spec, lambda_beta(spec, lam))


def composite_grad(spec: OperatorSpec, lam) -> np.ndarray:
    """Partials with respect to the eigenvalues: sums of family partials over sets.

    For beta = 0 this is out[..., i] = sum of f_grad over all sets containing i,
    the coefficient entering the linearized operator's eigenframe diagonal.
    """
    lam = np.asarray(lam, dtype=float)
    fam = spec.index_family
    fp = f_grad(spec, lambda_beta(spec, lam))
    out = fp @ fam.membership
    if spec.beta != 0.0:
        out = (1.0 + spec.beta) * out - spec.beta * fp.sum(axis=-1, keepdims=True)
    return out
