"""Flat Hermitian model geometries and discrete field operations.

Two model geometries are supported.  ``FlatTorus(n, P)`` is the unit complex
torus in dimension n discretized by P points per real axis; grids carry the
axis order (x_1, ..., x_n, y_1, ..., y_n), and all differentiation is
Fourier-spectral, exact on resolved trigonometric modes.  ``Interval(a, b, P)``
is the one-real-dimensional reduction (the n=1 slice with no imaginary
dependence, where the complex Hessian becomes d^2/dx^2 / 4), discretized by
second-order finite differences with one-sided closures at the boundary.

The complex Hessian of a real u uses, with z_i = x_i + i y_i,

    H_ii = (u_{x_i x_i} + u_{y_i y_i}) / 4,
    H_ij = (u_{x_i x_j} + u_{y_i y_j}) / 4 + i (u_{x_i y_j} - u_{y_i x_j}) / 4.

Pointwise eigenstructure with respect to a constant positive-definite metric
comes from the Cholesky-reduced standard eigenproblem, with a closed-form
fast path for 1x1 and 2x2 matrices (the grid-heavy cases).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft

from . import symcalc
from .errors import AdmissibilityError, ConfigurationError, DomainError
from .runtime import thread_count
from .symcalc import OperatorSpec


def _is_power_of_two(p: int) -> bool:
    return p >= 1 and (p & (p - 1)) == 0


@dataclass(frozen=True, eq=False)
class FlatTorus:
    """Unit complex torus in dimension n, P grid points per real axis."""

    n: int
    points_per_axis: int
    metric: np.ndarray | None = None  # constant Hermitian positive definite, identity if None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("torus complex dimension must be >= 1")
        if self.metric is not None:
            m = np.asarray(self.metric, dtype=complex)
            if m.shape != (self.n, self.n) or not np.allclose(m, m.conj().T, atol=1e-12):
                raise ConfigurationError("metric must be a Hermitian n x n matrix")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ConfigurationError("metric must be positive definite")
            object.__setattr__(self, "metric", m)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * (2 * self.n)

    @property
    def diameter(self) -> float:
        # half-period displacement along every real axis
        return 0.5 * math.sqrt(2 * self.n)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        P = self.points_per_axis
        x = np.arange(P) / P
        shape = [1] * (2 * self.n)
        shape[axis] = P
        return x.reshape(shape)

    def omega(self) -> np.ndarray:
        if self.metric is None:
            return np.eye(self.n, dtype=complex)
        return self.metric


@dataclass(frozen=True, eq=False)
class Interval:
    """Uniform grid on [a, b] including both endpoints; n=1 reduction."""

    a: float
    b: float
    points: int
    n: int = 1

    def __post_init__(self):
        if not (self.b > self.a):
            raise ConfigurationError("interval requires b > a")
        if self.points < 5:
            raise ConfigurationError("interval grid needs at least 5 points")

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.points,)

    @property
    def spacing(self) -> float:
        return (self.b - self.a) / (self.points - 1)

    @property
    def diameter(self) -> float:
        return self.b - self.a

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.points)

    def omega(self) -> np.ndarray:
        return np.eye(1, dtype=complex)


Geometry = FlatTorus | Interval


@dataclass(eq=False)
class ScalarField:
    geometry: Geometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geometry.grid_shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.geometry.grid_shape}")

    def copy(self) -> "ScalarField":
        return ScalarField(self.geometry, self.values.copy())


@dataclass(eq=False)
class HermitianField:
    geometry: Geometry
    matrices: np.ndarray  # grid_shape + (n, n), complex

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=complex)
        n = self.geometry.n
        if self.matrices.shape != self.geometry.grid_shape + (n, n):
            raise ConfigurationError(
                f"matrix field shape {self.matrices.shape} does not match "
                f"grid {self.geometry.grid_shape} with n={n}")

    def hermitian_defect(self) -> float:
        return float(np.abs(self.matrices - np.conj(np.swapaxes(self.matrices, -1, -2))).max())


@dataclass(eq=False)
class SpectralField:
    """Pointwise eigenvalues (ascending) and metric-orthonormal eigenframes."""

    geometry: Geometry
    eigenvalues: np.ndarray  # grid_shape + (n,), real ascending
    frames: np.ndarray       # grid_shape + (n, n), columns are eigenvectors


def scalar_constant(geometry: Geometry, value: float) -> ScalarField:
    return ScalarField(geometry, np.full(geometry.grid_shape, float(value)))


def constant_hermitian(geometry: Geometry, matrix) -> HermitianField:
    n = geometry.n
    m = np.asarray(matrix, dtype=complex).reshape(n, n)
    out = np.broadcast_to(m, geometry.grid_shape + (n, n)).copy()
    return HermitianField(geometry, out)


def metric_multiple(geometry: Geometry, c: float) -> HermitianField:
    """The field c * omega."""
    return constant_hermitian(geometry, c * geometry.omega())


# -- spectral differentiation on the torus -----------------------------------

@lru_cache(maxsize=8)
def _wavenumbers(points: int, axes: int) -> tuple[np.ndarray, ...]:
    """Angular wavenumbers per axis, broadcast-shaped for the rfftn layout."""
    ks = []
    for a in range(axes):
        if a == axes - 1:
            k = 2.0 * math.pi * np.fft.rfftfreq(points, d=1.0 / points)
        else:
            k = 2.0 * math.pi * np.fft.fftfreq(points, d=1.0 / points)
        shape = [1] * axes
        shape[a] = k.size
        ks.append(k.reshape(shape))
    return tuple(ks)


def _fft(values: np.ndarray) -> np.ndarray:
    return scipy.fft.rfftn(values, workers=thread_count())


def _ifft(spectrum: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return scipy.fft.irfftn(spectrum, s=shape, workers=thread_count())


def _check_torus_grid(geom: FlatTorus) -> None:
    if not _is_power_of_two(geom.points_per_axis):
        raise ConfigurationError(
            f"spectral differentiation needs a power-of-two grid, got {geom.points_per_axis}")


def complex_hessian(u: ScalarField) -> HermitianField:
    """Pointwise complex Hessian of a real scalar field."""
    geom = u.geometry
    n = geom.n
    if isinstance(geom, Interval):
        h = second_derivative(u) * 0.25
        return HermitianField(geom, h.reshape(geom.grid_shape + (1, 1)))
    _check_torus_grid(geom)
    axes = 2 * n
    ks = _wavenumbers(geom.points_per_axis, axes)
    uh = _fft(u.values)
    H = np.zeros(geom.grid_shape + (n, n), dtype=complex)
    for i in range(n):
        xi, yi = ks[i], ks[n + i]
        H[..., i, i] = -0.25 * _ifft((xi * xi + yi * yi) * uh, geom.grid_shape)
        for j in range(i + 1, n):
            xj, yj = ks[j], ks[n + j]
            sym = -0.25 * _ifft((xi * xj + yi * yj) * uh, geom.grid_shape)
            skew = -0.25 * _ifft((xi * yj - yi * xj) * uh, geom.grid_shape)
            H[..., i, j] = sym + 1j * skew
            H[..., j, i] = sym - 1j * skew
    return HermitianField(geom, H)


def first_derivatives(u: ScalarField) -> np.ndarray:
    """Real partials along every grid axis, stacked on the last axis."""
    geom = u.geometry
    if isinstance(geom, Interval):
        h = geom.spacing
        v = u.values
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        return out[..., None]
    _check_torus_grid(geom)
    axes = 2 * geom.n
    ks = _wavenumbers(geom.points_per_axis, axes)
    uh = _fft(u.values)
    nyq = math.pi * geom.points_per_axis
    out = np.empty(geom.grid_shape + (axes,))
    for a in range(axes):
        k = np.where(np.abs(ks[a]) >= nyq - 1e-9, 0.0, ks[a])  # odd derivative: drop Nyquist
        out[..., a] = _ifft(1j * k * uh, geom.grid_shape)
    return out


def gradient_squared(u: ScalarField) -> ScalarField:
    """|complex gradient|^2 = sum_i |du/dz_i|^2 = |real gradient|^2 / 4."""
    parts = first_derivatives(u)
    return ScalarField(u.geometry, 0.25 * np.sum(parts * parts, axis=-1))


def second_derivative(u: ScalarField) -> np.ndarray:
    """1-D second derivative on the interval, one-sided second order at the ends."""
    geom = u.geometry
    if not isinstance(geom, Interval):
        raise ConfigurationError("second_derivative is an interval operation")
    h2 = geom.spacing**2
    v = u.values
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h2
    return out


def assemble_g(u: ScalarField, X: HermitianField) -> HermitianField:
    """The Hermitian form (complex Hessian of u) + X, re-symmetrized."""
    if X.geometry.grid_shape != u.geometry.grid_shape:
        raise ConfigurationError("u and X live on different grids")
    H = complex_hessian(u).matrices + X.matrices
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    return HermitianField(u.geometry, H)


# -- pointwise eigenstructure -------------------------------------------------

def _eigh_2x2(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Hermitian 2x2 eigendecomposition, vectorized over the grid."""
    a = A[..., 0, 0].real
    b = A[..., 1, 1].real
    c = A[..., 0, 1]
    mean = 0.5 * (a + b)
    delta = 0.5 * (a - b)
    absc = np.abs(c)
    R = np.hypot(delta, absc)
    lam = np.stack([mean - R, mean + R], axis=-1)

    scale = np.abs(a) + np.abs(b) + absc + 1.0
    diagonal = absc <= 1e-300 * scale
    # v1 ~ (-c, delta + R), v2 ~ (c, R - delta); both columns degenerate only
    # in the diagonal case, handled by unit vectors ordered by the sign of delta
    n1 = np.hypot(absc, delta + R)
    n2 = np.hypot(absc, R - delta)
    safe1 = np.where(diagonal | (n1 == 0), 1.0, n1)
    safe2 = np.where(diagonal | (n2 == 0), 1.0, n2)
    V = np.empty(A.shape, dtype=complex)
    V[..., 0, 0] = -c / safe1
    V[..., 1, 0] = (delta + R) / safe1
    V[..., 0, 1] = c / safe2
    V[..., 1, 1] = (R - delta) / safe2
    swap = delta > 0  # diagonal case: ascending order puts e2 first when a > b
    e_lo = np.where(swap, 1.0, 0.0)
    for col, comp in ((0, e_lo), (1, 1.0 - e_lo)):
        V[..., 0, col] = np.where(diagonal, 1.0 - comp, V[..., 0, col])
        V[..., 1, col] = np.where(diagonal, comp, V[..., 1, col])
    return lam, V


def spectral_decompose(g: HermitianField, omega: np.ndarray | None = None) -> SpectralField:
    """Eigenvalues and eigenframes of g with respect to the metric.

    Solved through the Cholesky reduction omega = L L*, a standard Hermitian
    eigensolve of L^-1 g L^-*, and the back-transform of the frames; the
    frames are omega-orthonormal and satisfy g v = lambda omega v.
    """
    geom = g.geometry
    n = geom.n
    if omega is None:
        omega = geom.omega()
    omega = np.asarray(omega, dtype=complex)
    if np.linalg.eigvalsh(omega).min() <= 0:
        raise ConfigurationError("metric must be positive definite")

    identity_metric = np.allclose(omega, np.eye(n), atol=1e-15)
    if identity_metric:
        A = g.matrices
    else:
        L = np.linalg.cholesky(omega)
        Li = np.linalg.inv(L)
        A = np.einsum("ab,...bc,dc->...ad", Li, g.matrices, Li.conj())

    if n == 1:
        lam = A[..., 0, 0].real[..., None]
        V = np.ones(geom.grid_shape + (1, 1), dtype=complex)
    elif n == 2:
        lam, V = _eigh_2x2(A)
    else:
        lam, V = np.linalg.eigh(A)

    if not identity_metric:
        V = np.einsum("ba,...bc->...ac", Li.conj(), V)
    return SpectralField(geometry=geom, eigenvalues=lam, frames=V)


# -- the operator layer on fields ---------------------------------------------

def operator_margin(spec: OperatorSpec, s: SpectralField) -> np.ndarray:
    """Pointwise minimum of the domain-cone inequalities at the deformed image."""
    return symcalc.composite_margin(spec, s.eigenvalues)


def operator_values(spec: OperatorSpec, s: SpectralField) -> np.ndarray:
    """Pointwise operator value; raises with the offending grid point."""
    try:
        return np.asarray(symcalc.composite_eval(spec, s.eigenvalues))
    except AdmissibilityError as err:
        if err.where is not None:
            err.where = np.unravel_index(err.where, s.geometry.grid_shape)
        raise


def linearization_coefficients(spec: OperatorSpec, s: SpectralField) -> HermitianField:
    """Coefficient field of the linearized operator.

    In the eigenframe of the form the diagonal entries are the partials of
    the composite with respect to the eigenvalues (sums of family partials
    over the index sets containing each eigendirection); the returned matrix
    field is frames @ diag @ frames^H, positive semidefinite whenever the
    family is componentwise nondecreasing and beta = 0.
    """
    diag = diagonal_coefficients(spec, s)
    C = np.einsum("...ak,...k,...bk->...ab", s.frames, diag, np.conj(s.frames))
    return HermitianField(s.geometry, C)


def diagonal_coefficients(spec: OperatorSpec, s: SpectralField) -> np.ndarray:
    """Eigenframe-diagonal coefficients, one per eigendirection per point."""
    lam = s.eigenvalues
    try:
        return symcalc.composite_grad(spec, lam)
    except AdmissibilityError as err:
        if err.where is not None:
            err.where = np.unravel_index(err.where, s.geometry.grid_shape)
        raise


def family_gradient_sum(spec: OperatorSpec, s: SpectralField) -> np.ndarray:
    """Pointwise sum of the family partials (the total ellipticity weight)."""
    w = symcalc.lambda_beta(spec, s.eigenvalues)
    return symcalc.f_grad(spec, w).sum(axis=-1)


def contract_hessian(C: HermitianField, u: ScalarField) -> np.ndarray:
    """trace(C^T . complex Hessian of u) as a real field.

    On the torus the real and imaginary Hessian parts are combined into one
    Fourier multiplier per matrix entry, so the contraction costs n^2 inverse
    transforms instead of one per real second derivative.
    """
    geom = u.geometry
    n = geom.n
    if isinstance(geom, Interval):
        return C.matrices[..., 0, 0].real * 0.25 * second_derivative(u)
    _check_torus_grid(geom)
    ks = _wavenumbers(geom.points_per_axis, 2 * n)
    uh = _fft(u.values)
    out = np.zeros(geom.grid_shape)
    for i in range(n):
        xi, yi = ks[i], ks[n + i]
        diag = -0.25 * _ifft((xi * xi + yi * yi) * uh, geom.grid_shape)
        out += C.matrices[..., i, i].real * diag
        for j in range(i + 1, n):
            xj, yj = ks[j], ks[n + j]
            sym = -_ifft((xi * xj + yi * yj) * uh, geom.grid_shape)
            skew = -_ifft((xi * yj - yi * xj) * uh, geom.grid_shape)
            out += 0.5 * (C.matrices[..., i, j].real * sym + C.matrices[..., i, j].imag * skew)
    return out


def laplacian_symbol(geom: FlatTorus) -> np.ndarray:
    """Fourier symbol of the full real Laplacian on the rfft grid (negative)."""
    _check_torus_grid(geom)
    ks = _wavenumbers(geom.points_per_axis, 2 * geom.n)
    sym = np.zeros(tuple(k.size for k in ks))
    for k in ks:
        sym = sym - k * k
    return sym


# -- binary field dumps --------------------------------------------------------

def geometry_to_dict(geom: Geometry) -> dict:
    if isinstance(geom, FlatTorus):
        d = {"kind": "flat_torus", "n": geom.n, "points_per_axis": geom.points_per_axis}
        if geom.metric is not None:
            d["metric_real"] = geom.metric.real.tolist()
            d["metric_imag"] = geom.metric.imag.tolist()
        return d
    return {"kind": "interval", "a": geom.a, "b": geom.b, "points": geom.points}


def geometry_from_dict(d: dict) -> Geometry:
    kind = d.get("kind")
    if kind == "flat_torus":
        metric = None
        if "metric_real" in d:
            metric = np.asarray(d["metric_real"]) + 1j * np.asarray(d.get("metric_imag", 0.0))
        return FlatTorus(n=int(d["n"]), points_per_axis=int(d["points_per_axis"]), metric=metric)
    if kind == "interval":
        return Interval(a=float(d["a"]), b=float(d["b"]), points=int(d["points"]))
    raise ConfigurationError(f"unknown geometry kind {kind!r}", field_path="geometry.kind")


def dump_field(field: ScalarField | HermitianField, prefix: str | Path) -> tuple[Path, Path]:
    """Write raw little-endian float64 grid data plus a JSON sidecar header."""
    prefix = Path(prefix)
    if isinstance(field, ScalarField):
        kind = "scalar"
        payload = np.ascontiguousarray(field.values, dtype="<f8")
        components = "real"
        shape = list(field.values.shape)
    else:
        kind = "hermitian"
        flat = np.ascontiguousarray(field.matrices)
        payload = flat.view("<f8") if flat.dtype == np.dtype("<c16") else \
            np.ascontiguousarray(flat.astype("<c16")).view("<f8")
        components = "complex_interleaved_re_im"
        shape = list(field.matrices.shape)
    bin_path = prefix.with_suffix(".f64")
    meta_path = prefix.with_suffix(".json")
    bin_path.write_bytes(payload.tobytes(order="C"))
    meta_path.write_text(json.dumps({
        "format": "plpde-field-v1",
        "kind": kind,
        "geometry": geometry_to_dict(field.geometry),
        "shape": shape,
        "dtype": "float64",
        "endianness": "little",
        "order": "C",
        "components": components,
    }, indent=2, sort_keys=True))
    return bin_path, meta_path


def field_from_payload(meta: dict, raw: bytes) -> ScalarField | HermitianField:
    """Reconstruct a field from its sidecar header and raw byte payload."""
    if meta.get("format") != "plpde-field-v1":
        raise ConfigurationError("unrecognized field dump header")
    geom = geometry_from_dict(meta["geometry"])
    data = np.frombuffer(raw, dtype="<f8")
    shape = tuple(meta["shape"])
    if meta["kind"] == "scalar":
        return ScalarField(geom, data.reshape(shape).copy())
    return HermitianField(geom, data.view("<c16").reshape(shape).copy())


def load_field(prefix: str | Path) -> ScalarField | HermitianField:
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    return field_from_payload(meta, prefix.with_suffix(".f64").read_bytes())
