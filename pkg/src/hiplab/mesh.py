"""Uniform tensor grids on the unit square and the discrete calculus on them.

Nodes are (i*h, j*h) for 0 <= i, j <= n with h = 1/n.  Field values are
stored as (n+1, n+1) arrays indexed [j, i] (y outer, x inner), which makes
the on-disk "hipfield" layout a plain ``tobytes()`` of the array.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .errors import GridMismatchError

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "gradient",
    "divergence",
    "l2_inner",
    "l2_norm",
    "h1_norm",
    "sobolev_norm",
    "c2_norm",
    "sine_coefficients",
    "field_from_sine_coefficients",
    "random_band_limited",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on (0,1)^2 with n cells per side ((n+1)^2 nodes)."""

    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs n >= 4, got n = {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.n + 1)

    @property
    def num_nodes(self) -> int:
        return (self.n + 1) ** 2

    @property
    def num_interior(self) -> int:
        return (self.n - 1) ** 2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodal coordinate arrays X, Y of shape (n+1, n+1), X[j, i] = i*h."""
        t = np.linspace(0.0, 1.0, self.n + 1)
        return np.meshgrid(t, t, indexing="xy")

    def trapezoid_weights(self) -> np.ndarray:
        """Per-node quadrature weights of the 2-D trapezoidal rule."""
        w1 = np.full(self.n + 1, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        return np.outer(w1, w1)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ScalarField:
    """Nodal values of a function on a Grid, boundary ring included."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite value in ScalarField")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        x, y = grid.coords()
        return cls(grid, fn(x, y))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]

    def boundary_ring(self) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return self.values[mask]

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    # convenience arithmetic for building perturbations in tests and sweeps
    def __add__(self, other):
        return ScalarField(self.grid, self.values + _raw(self, other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _raw(self, other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _raw(self, other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _raw(f: ScalarField, other):
    if isinstance(other, ScalarField):
        check_same_grid(f, other)
        return other.values
    return other


@dataclass(frozen=True)
class VectorField:
    """Two nodal components on a Grid."""

    grid: Grid
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        for comp in (self.x, self.y):
            if comp.shape != self.grid.shape:
                raise ValueError("component shape does not match grid")
            if not np.all(np.isfinite(comp)):
                raise ValueError("non-finite value in VectorField")

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x, self.y)


def check_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"{f.grid} != {grid}")
    return grid


# ---------------------------------------------------------------------------
# first and second derivative stencils

def _d_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order first derivative: central inside, one-sided on the edges."""
    v = np.moveaxis(values, axis, 1)
    out = np.empty_like(v)
    out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * h)
    out[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * h)
    out[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * h)
    return np.moveaxis(out, 1, axis)


def _d2_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order second derivative, one-sided on the edges."""
    v = np.moveaxis(values, axis, 1)
    out = np.empty_like(v)
    out[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / h**2
    out[:, 0] = (2.0 * v[:, 0] - 5.0 * v[:, 1] + 4.0 * v[:, 2] - v[:, 3]) / h**2
    out[:, -1] = (2.0 * v[:, -1] - 5.0 * v[:, -2] + 4.0 * v[:, -3] - v[:, -4]) / h**2
    return np.moveaxis(out, 1, axis)


def gradient(f: ScalarField) -> VectorField:
    """Discrete gradient: central differences at interior nodes, second-order
    one-sided stencils on the boundary ring."""
    h = f.grid.h
    return VectorField(f.grid, _d_axis(f.values, h, 1), _d_axis(f.values, h, 0))


def divergence(v: VectorField) -> ScalarField:
    """Discrete divergence with the same stencils as :func:`gradient`.

    The pair is adjoint-consistent, <grad f, v> = -<f, div v>, whenever both
    f and v vanish on the boundary ring.
    """
    h = v.grid.h
    return ScalarField(v.grid, _d_axis(v.x, h, 1) + _d_axis(v.y, h, 0))


# ---------------------------------------------------------------------------
# inner products and norms

def l2_inner(f: ScalarField, g: ScalarField) -> float:
    """Trapezoidal L2(0,1)^2 inner product."""
    grid = check_same_grid(f, g)
    return float(np.sum(grid.trapezoid_weights() * f.values * g.values))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


def vector_l2_inner(u: VectorField, v: VectorField) -> float:
    grid = check_same_grid(u, v)
    w = grid.trapezoid_weights()
    return float(np.sum(w * (u.x * v.x + u.y * v.y)))


def h1_norm(f: ScalarField) -> float:
    """Full H1 norm (L2 of the field plus L2 of its discrete gradient).

    Unlike :func:`sobolev_norm` this does not require zero boundary values,
    so it applies to data-space fields such as F(sigma) perturbations.
    """
    g = gradient(f)
    return float(np.sqrt(l2_inner(f, f) + vector_l2_inner(g, g)))


def sine_coefficients(f: ScalarField) -> np.ndarray:
    """Coefficients c[k-1, l-1] of f = sum c_kl sin(k pi x) sin(l pi y).

    Exact (up to rounding) for nodal data vanishing on the boundary ring.
    """
    n = f.grid.n
    scale = max(1.0, float(np.abs(f.values).max()))
    if float(np.abs(f.boundary_ring()).max()) > 1e-12 * scale:
        raise ValueError("sine transform requires zero boundary ring")
    return scipy.fft.dstn(f.interior(), type=1) / float(n * n)


def field_from_sine_coefficients(grid: Grid, coeffs: np.ndarray) -> ScalarField:
    n = grid.n
    if coeffs.shape != (n - 1, n - 1):
        raise ValueError(f"need (n-1, n-1) coefficients, got {coeffs.shape}")
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = scipy.fft.idstn(coeffs * float(n * n), type=1)
    return ScalarField(grid, values)


def _dirichlet_eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n)
    return np.pi**2 * (k[None, :] ** 2 + k[:, None] ** 2)


def sobolev_norm(f: ScalarField, s: float) -> float:
    """H^s norm on the Dirichlet sine-spectral scale.

    With coefficients c_kl and Dirichlet-Laplacian eigenvalues
    lam_kl = pi^2 (k^2 + l^2), returns (sum (1+lam)^s c^2)^(1/2) where the
    coefficient normalization makes s=0 agree with the trapezoidal L2 norm.
    """
    if s < 0:
        raise ValueError(f"need s >= 0, got {s}")
    c = sine_coefficients(f)
    lam = _dirichlet_eigenvalues(f.grid.n)
    return 0.5 * float(np.sqrt(np.sum((1.0 + lam) ** s * c * c)))


def c2_norm(f: ScalarField) -> float:
    """Grid surrogate for the C2 norm: sup of |f| plus sup of the discrete
    first derivatives plus sup of the discrete second derivatives."""
    h = f.grid.h
    v = f.values
    m0 = np.abs(v).max()
    m1 = max(np.abs(_d_axis(v, h, 1)).max(), np.abs(_d_axis(v, h, 0)).max())
    fxy = _d_axis(_d_axis(v, h, 1), h, 0)
    m2 = max(
        np.abs(_d2_axis(v, h, 1)).max(),
        np.abs(_d2_axis(v, h, 0)).max(),
        np.abs(fxy).max(),
    )
    return float(m0 + m1 + m2)


# ---------------------------------------------------------------------------
# random smooth zero-boundary fields

def random_band_limited(
    grid: Grid, kmax: int, seed: int, decay: float = 2.0
) -> ScalarField:
    """Random truncated sine series with coefficients ~ N(0,1) * (k^2+l^2)^-decay/2.

    Zero trace is exact by construction and every spectral Sobolev norm is
    computable, which is what the stability sweeps need.
    """
    if not 1 <= kmax <= grid.n - 1:
        raise ValueError(f"kmax must be in [1, n-1], got {kmax}")
    rng = np.random.default_rng(seed)
    k = np.arange(1, kmax + 1)
    damp = (k[None, :] ** 2 + k[:, None] ** 2) ** (-decay / 2.0)
    c = np.zeros((grid.n - 1, grid.n - 1))
    c[:kmax, :kmax] = rng.standard_normal((kmax, kmax)) * damp
    return field_from_sine_coefficients(grid, c)


# ---------------------------------------------------------------------------
# "hipfield v1" dump format

_MAGIC = "hipfield"


def write_field(path, f: ScalarField) -> None:
    """One ASCII header line, then (n+1)^2 little-endian float64, row-major,
    j (y) outer, i (x) inner.  Round trips bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(f"{_MAGIC} 1 {f.grid.n}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != _MAGIC or header[1] != "1":
            raise ValueError(f"not a hipfield v1 file: {path}")
        n = int(header[2])
        raw = fh.read((n + 1) ** 2 * 8)
    values = np.frombuffer(raw, dtype="<f8").reshape(n + 1, n + 1).astype(np.float64)
    return ScalarField(Grid(n), values)


# ---------------------------------------------------------------------------
# sparse stencil matrices (used to form exact discrete adjoints)

@functools.lru_cache(maxsize=8)
def gradient_matrices(n: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse (n+1)^2 x (n+1)^2 matrices of the two gradient components,
    same stencils as :func:`gradient`, nodes flattened [j, i] row-major."""
    h = 1.0 / n
    m = n + 1
    d = sp.lil_matrix((m, m))
    for i in range(1, m - 1):
        d[i, i - 1] = -0.5 / h
        d[i, i + 1] = 0.5 / h
    d[0, 0], d[0, 1], d[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    d[m - 1, m - 1], d[m - 1, m - 2], d[m - 1, m - 3] = 1.5 / h, -2.0 / h, 0.5 / h
    d = d.tocsr()
    eye = sp.identity(m, format="csr")
    gx = sp.kron(eye, d, format="csr")   # derivative along i (x)
    gy = sp.kron(d, eye, format="csr")   # derivative along j (y)
    return gx, gy


@functools.lru_cache(maxsize=8)
def interior_embedding(n: int) -> sp.csr_matrix:
    """(n+1)^2 x (n-1)^2 zero-extension of interior nodes to the full grid."""
    m = n + 1
    idx = np.arange(m * m).reshape(m, m)[1:-1, 1:-1].ravel()
    cols = np.arange((n - 1) ** 2)
    data = np.ones_like(cols, dtype=float)
    return sp.csr_matrix((data, (idx, cols)), shape=(m * m, (n - 1) ** 2))
