"""Transport operator, gradient-direction projections, the second-order
factor L of the linearization, and spectral shadows of its stability bounds.

L is assembled from the weak form: the diagonal part of the coefficient
tensor M = sigma0 (PiPerp + (1-p) Pi0) goes on grid edges with arithmetic
nodal averaging, the off-diagonal part on nodes with central differences.
This keeps the matrix exactly symmetric, reduces entrywise to the 5-point
anisotropic stencil when grad u0 is axis aligned, and is positive
semidefinite for p <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import mesh
from .elliptic import Conductivity, assemble, solve_zero_bc
from .errors import CurlResidualError, EigenConvergenceError, GradientFloorViolated
from .forward import DEFAULT_GRAD_FLOOR, build_bundle, differential
from .mesh import Grid, ScalarField, VectorField, check_same_grid

__all__ = [
    "ProjectedGradientOperator",
    "transport_apply",
    "transport_matrix",
    "project_parallel",
    "project_perp",
    "assemble_L",
    "factorization_residual",
    "l_spectral_bound",
    "transport_spectral_bound",
    "harmonic_conjugate",
    "wave_speed",
]


def _grad_checked(u0: ScalarField, grad_floor: float) -> tuple[VectorField, np.ndarray]:
    g = mesh.gradient(u0)
    mag = g.magnitude()
    if float(mag.min()) < grad_floor:
        j, i = np.unravel_index(np.argmin(mag), mag.shape)
        raise GradientFloorViolated((int(i), int(j)), float(mag[j, i]), grad_floor)
    return g, mag


def transport_apply(u0: ScalarField, rho: ScalarField) -> ScalarField:
    """T0 rho = grad u0 . grad rho, nodewise."""
    check_same_grid(u0, rho)
    g0 = mesh.gradient(u0)
    gr = mesh.gradient(rho)
    return ScalarField(u0.grid, g0.x * gr.x + g0.y * gr.y)


def transport_matrix(u0: ScalarField) -> sp.csr_matrix:
    """Sparse T0 from zero-boundary interior vectors to full-grid fields."""
    grid = u0.grid
    g0 = mesh.gradient(u0)
    gx, gy = mesh.gradient_matrices(grid.n)
    emb = mesh.interior_embedding(grid.n)
    T = sp.diags(g0.x.ravel()) @ gx + sp.diags(g0.y.ravel()) @ gy
    return (T @ emb).tocsr()


def project_parallel(
    u0: ScalarField, v: VectorField, grad_floor: float = DEFAULT_GRAD_FLOOR
) -> VectorField:
    """Pi0 v: pointwise orthogonal projection of v onto grad u0."""
    check_same_grid(u0, v)
    g0, mag = _grad_checked(u0, grad_floor)
    coef = (g0.x * v.x + g0.y * v.y) / mag**2
    return VectorField(u0.grid, coef * g0.x, coef * g0.y)


def project_perp(
    u0: ScalarField, v: VectorField, grad_floor: float = DEFAULT_GRAD_FLOOR
) -> VectorField:
    """PiPerp v = v - Pi0 v."""
    par = project_parallel(u0, v, grad_floor)
    return VectorField(u0.grid, v.x - par.x, v.y - par.y)


# ---------------------------------------------------------------------------
# weak-form assembly of L

def _edge_cross_stiffness(
    grid: Grid, m11: np.ndarray, m22: np.ndarray, m12: np.ndarray
) -> sp.csr_matrix:
    """Interior stiffness of the form with coefficient tensor (m11 m12; m12 m22).

    Diagonal entries ride on edges (arithmetic average of the nodal
    coefficient), the mixed entry on nodes with central differences; rows
    and columns run over interior nodes, test/trial functions vanish on the
    ring.  Scaled so the matrix realizes the operator in the h^2-weighted
    inner product (i.e. it plays the role of -div M grad).
    """
    n, h = grid.n, grid.h
    m = n - 1
    cx = 0.5 * (m11[:, 1:] + m11[:, :-1])   # x-edge coefficients
    cy = 0.5 * (m22[1:, :] + m22[:-1, :])   # y-edge coefficients
    aE = cx[1:-1, 1:]
    aW = cx[1:-1, :-1]
    aN = cy[1:, 1:-1]
    aS = cy[:-1, 1:-1]

    idx = np.arange(m * m).reshape(m, m)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [(aE + aW + aN + aS).ravel() / h**2]
    rows += [idx[:, :-1].ravel(), idx[:, 1:].ravel()]
    cols += [idx[:, 1:].ravel(), idx[:, :-1].ravel()]
    vals += [-aE[:, :-1].ravel() / h**2, -aW[:, 1:].ravel() / h**2]
    rows += [idx[:-1, :].ravel(), idx[1:, :].ravel()]
    cols += [idx[1:, :].ravel(), idx[:-1, :].ravel()]
    vals += [-aN[:-1, :].ravel() / h**2, -aS[1:, :].ravel() / h**2]
    diag_part = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m * m, m * m),
    )

    if np.any(m12):
        gx, gy = mesh.gradient_matrices(n)
        emb = mesh.interior_embedding(n)
        gxi = gx @ emb
        gyi = gy @ emb
        d = sp.diags(m12.ravel())
        cross = gxi.T @ d @ gyi
        cross = cross + cross.T
    else:
        cross = sp.csr_matrix((m * m, m * m))
    return (diag_part + cross).tocsr()


@dataclass
class ProjectedGradientOperator:
    """Assembled L = PiPerp-part + (1-p) Pi0-part over interior nodes."""

    grid: Grid
    p: float
    matrix: sp.csr_matrix = dc_field(repr=False)
    perp_matrix: sp.csr_matrix = dc_field(repr=False)
    par_matrix: sp.csr_matrix = dc_field(repr=False)
    sigma0: Conductivity = dc_field(repr=False)
    u0: ScalarField = dc_field(repr=False)

    def apply(self, v: ScalarField) -> ScalarField:
        """L v as a full-grid field (zero ring), v zero on the ring."""
        out = np.zeros(self.grid.shape)
        out[1:-1, 1:-1] = (self.matrix @ v.interior().ravel()).reshape(
            self.grid.n - 1, self.grid.n - 1
        )
        return ScalarField(self.grid, out)

    def energy_split(self, v: ScalarField) -> tuple[float, float, float]:
        """(<Lv,v>, perp energy, parallel energy), all in the L2(h^2) pairing."""
        x = v.interior().ravel()
        h2 = self.grid.h**2
        perp = h2 * float(x @ (self.perp_matrix @ x))
        par = h2 * float(x @ (self.par_matrix @ x))
        total = h2 * float(x @ (self.matrix @ x))
        return total, perp, par


def assemble_L(
    sigma0: Conductivity,
    u0: ScalarField,
    p: float,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> ProjectedGradientOperator:
    """Weak-form assembly of
    L = (PiPerp grad)' sigma0 (PiPerp grad) + (1-p)(Pi0 grad)' sigma0 (Pi0 grad).

    p = 0 reproduces the -div sigma0 grad flux stencil entrywise; p in (0,1]
    is the operating range of the factorization.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"L is assembled for p in [0, 1], got {p}")
    check_same_grid(sigma0.field, u0)
    grid = u0.grid
    g0, mag = _grad_checked(u0, grad_floor)
    s = sigma0.field.values
    # parallel tensor sigma0 * (g g^T)/|g|^2; perpendicular is sigma0 I minus it
    par11 = s * g0.x**2 / mag**2
    par22 = s * g0.y**2 / mag**2
    par12 = s * g0.x * g0.y / mag**2
    L_par = _edge_cross_stiffness(grid, par11, par22, par12)
    L_perp = _edge_cross_stiffness(grid, s - par11, s - par22, -par12)
    L = (L_perp + (1.0 - p) * L_par).tocsr()
    return ProjectedGradientOperator(
        grid=grid,
        p=p,
        matrix=L,
        perp_matrix=L_perp,
        par_matrix=L_par,
        sigma0=sigma0,
        u0=u0,
    )


# ---------------------------------------------------------------------------
# factorization identity of the linearization

def factorization_residual(
    sigma0: Conductivity,
    f: ScalarField,
    p: float,
    rho: ScalarField,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> float:
    """Relative defect of
    sigma0 T0( dF(rho sigma0) / (sigma0 |grad u0|^p) ) = -L Dirichlet^-1 T0 rho
    over interior nodes (0 when both sides vanish).
    """
    if np.any(np.abs(rho.boundary_ring()) > 0):
        raise ValueError("rho must vanish on the boundary ring")
    bundle = build_bundle(sigma0, f, p, grad_floor)
    s = sigma0.field.values

    h = rho * sigma0.field
    dF = differential(bundle, h)
    ratio = ScalarField(
        bundle.grid, dF.values / (s * bundle.speed_pow.values)
    )
    lhs = s * transport_apply(bundle.u0, ratio).values

    t0rho = transport_apply(bundle.u0, rho)
    z = solve_zero_bc(bundle.system, t0rho)
    L = assemble_L(sigma0, bundle.u0, p, grad_floor)
    rhs = -L.apply(z).values

    num = np.sqrt(np.sum((lhs - rhs)[1:-1, 1:-1] ** 2))
    den = np.sqrt(np.sum(lhs[1:-1, 1:-1] ** 2))
    if den < 1e-14:
        return 0.0
    return float(num / den)


# ---------------------------------------------------------------------------
# spectral shadows of the stability lemmas

def _smallest_eigenvalue(
    A: sp.csr_matrix,
    rtol: float = 1e-8,
    max_outer: int = 500,
    precondition: bool = True,
) -> float:
    """Smallest eigenvalue of an SPD sparse matrix by inverse power iteration
    with CG inner solves; deterministic start."""
    m = A.shape[0]
    x = np.full(m, 1.0 / np.sqrt(m))
    M = None
    if precondition:
        ml = pyamg.smoothed_aggregation_solver(A, max_coarse=16)
        M = ml.aspreconditioner(cycle="V")
    lam_prev = None
    for _ in range(max_outer):
        y, info = spla.cg(A, x, rtol=1e-10, atol=0.0, maxiter=100000, M=M)
        if info != 0:
            raise EigenConvergenceError("inner CG solve failed in inverse iteration")
        x = y / np.linalg.norm(y)
        lam = float(x @ (A @ x))
        if lam_prev is not None and abs(lam - lam_prev) <= rtol * abs(lam):
            return lam
        lam_prev = lam
    raise EigenConvergenceError(
        f"inverse power iteration did not settle within {max_outer} iterations"
    )


def l_spectral_bound(
    sigma0: Conductivity,
    u0: ScalarField,
    p: float,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> float:
    """Smallest eigenvalue of L: for p < 1 the smallest singular value of the
    elliptic factor, for p = 1 the minimum Rayleigh quotient (Lv,v)/||v||^2
    over the zero-boundary space (L symmetric, the two coincide here)."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    L = assemble_L(sigma0, u0, p, grad_floor)
    return _smallest_eigenvalue(L.matrix)


def transport_spectral_bound(
    u0: ScalarField, grad_floor: float = DEFAULT_GRAD_FLOOR
) -> float:
    """Smallest singular value of T0 restricted to zero-boundary fields
    (the stability constant of the transport lemma is its reciprocal)."""
    _grad_checked(u0, grad_floor)
    grid = u0.grid
    T = transport_matrix(u0)
    W = sp.diags(grid.trapezoid_weights().ravel())
    B = ((T.T @ W @ T) / grid.h**2).tocsr()
    lam = _smallest_eigenvalue(B, precondition=False)
    return float(np.sqrt(max(lam, 0.0)))


# ---------------------------------------------------------------------------
# level-set coordinates

def harmonic_conjugate(
    sigma0: Conductivity,
    u0: ScalarField,
    curl_tol: float | None = None,
) -> ScalarField:
    """Stream function u~ with grad u~ = (sigma0 grad u0) rotated by -90deg,
    normalized to u~(0,0) = 0, built by trapezoidal path integration along
    grid lines (bottom row first, then up each column).

    Integrating along the transposed path must agree to O(h^2); a larger
    defect means u0 is not sigma0-harmonic and raises CurlResidualError.
    """
    check_same_grid(sigma0.field, u0)
    grid = u0.grid
    h = grid.h
    g0 = mesh.gradient(u0)
    wx = sigma0.field.values * g0.y          # (a,b)^perp = (b,-a)
    wy = -sigma0.field.values * g0.x

    def cumtrap(values, axis):
        lo = np.take(values, np.arange(values.shape[axis] - 1), axis=axis)
        hi = np.take(values, np.arange(1, values.shape[axis]), axis=axis)
        out = np.zeros_like(values)
        sl = [slice(None)] * values.ndim
        sl[axis] = slice(1, None)
        out[tuple(sl)] = np.cumsum(0.5 * h * (lo + hi), axis=axis)
        return out

    # path 1: along y = 0, then vertically
    bottom = cumtrap(wx[0:1, :], axis=1)
    tilde1 = cumtrap(wy, axis=0) + bottom
    # path 2: along x = 0, then horizontally
    left = cumtrap(wy[:, 0:1], axis=0)
    tilde2 = cumtrap(wx, axis=1) + left

    defect = float(np.abs(tilde1 - tilde2).max())
    tol = curl_tol if curl_tol is not None else h
    if defect > tol:
        raise CurlResidualError(
            f"path-dependence {defect:.3e} exceeds {tol:.3e}; "
            "u0 does not look sigma0-harmonic"
        )
    return ScalarField(grid, tilde1)


def wave_speed(
    u0: ScalarField, grad_floor: float = DEFAULT_GRAD_FLOOR
) -> ScalarField:
    """Nodal 1/|grad u0|, the level-curve normal speed."""
    _, mag = _grad_checked(u0, grad_floor)
    return ScalarField(u0.grid, 1.0 / mag)
