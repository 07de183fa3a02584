"""Assembly and solution of the Dirichlet problem for div(sigma grad u).

The interior system uses the standard 5-point flux stencil with arithmetic
interface averaging, is symmetric positive definite by construction, and is
solved by conjugate gradients preconditioned with a smoothed-aggregation
multigrid V-cycle (symmetric, deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverConvergenceError
from .mesh import Grid, ScalarField, check_same_grid

__all__ = [
    "Conductivity",
    "DirichletSystem",
    "assemble",
    "solve_dirichlet",
    "solve_zero_bc",
    "flux_divergence",
    "perturbation_rhs_matrix",
]

DEFAULT_TOL = 1e-12  # relative residual; contract requires <= 1e-10


@dataclass(frozen=True)
class Conductivity:
    """Positive ScalarField with a certified lower bound."""

    field: ScalarField
    sigma_min: float

    def __post_init__(self):
        if not self.sigma_min > 0:
            raise ValueError(f"sigma_min must be > 0, got {self.sigma_min}")
        lo = float(self.field.values.min())
        if lo < self.sigma_min:
            raise ValueError(
                f"conductivity value {lo} below certified bound {self.sigma_min}"
            )

    @classmethod
    def certify(cls, field: ScalarField) -> "Conductivity":
        """Certify with the actual nodal minimum as the lower bound."""
        lo = float(field.values.min())
        if lo <= 0:
            raise ValueError(f"conductivity must be positive, min value {lo}")
        return cls(field, lo)

    @property
    def grid(self) -> Grid:
        return self.field.grid


def _interface_averages(sigma: np.ndarray):
    """Arithmetic averages at x-edges (shape (n+1, n)) and y-edges ((n, n+1))."""
    sx = 0.5 * (sigma[:, 1:] + sigma[:, :-1])
    sy = 0.5 * (sigma[1:, :] + sigma[:-1, :])
    return sx, sy


class DirichletSystem:
    """Immutable SPD interior system for one conductivity on one grid.

    The multigrid hierarchy is built lazily on first solve and cached, so a
    system can be shared across many right-hand sides.
    """

    def __init__(self, sigma: Conductivity, tol: float = DEFAULT_TOL):
        grid = sigma.grid
        n, h = grid.n, grid.h
        s = sigma.field.values
        sx, sy = _interface_averages(s)

        # interface conductivities seen from each interior node
        aE = sx[1:-1, 1:]      # edge (i, i+1) for i = 1..n-1, j = 1..n-1
        aW = sx[1:-1, :-1]
        aN = sy[1:, 1:-1]
        aS = sy[:-1, 1:-1]

        m = n - 1
        idx = np.arange(m * m).reshape(m, m)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [(aE + aW + aN + aS).ravel() / h**2]
        # east/west couplings within a grid row
        rows += [idx[:, :-1].ravel(), idx[:, 1:].ravel()]
        cols += [idx[:, 1:].ravel(), idx[:, :-1].ravel()]
        vals += [-aE[:, :-1].ravel() / h**2, -aW[:, 1:].ravel() / h**2]
        # north/south couplings across grid rows
        rows += [idx[:-1, :].ravel(), idx[1:, :].ravel()]
        cols += [idx[1:, :].ravel(), idx[:-1, :].ravel()]
        vals += [-aN[:-1, :].ravel() / h**2, -aS[1:, :].ravel() / h**2]
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m * m, m * m),
        )

        self.grid = grid
        self.sigma = sigma
        self.matrix = A
        self.interface_x = sx
        self.interface_y = sy
        self.tol = tol
        self.maxiter = 20 * n
        self._ml = None

    def boundary_lift(self, f: ScalarField) -> np.ndarray:
        """Interior right-hand-side contribution of boundary values f."""
        n, h = self.grid.n, self.grid.h
        m = n - 1
        v = f.values
        lift = np.zeros((m, m))
        lift[:, 0] += self.interface_x[1:-1, 0] * v[1:-1, 0] / h**2
        lift[:, -1] += self.interface_x[1:-1, -1] * v[1:-1, -1] / h**2
        lift[0, :] += self.interface_y[0, 1:-1] * v[0, 1:-1] / h**2
        lift[-1, :] += self.interface_y[-1, 1:-1] * v[-1, 1:-1] / h**2
        return lift.ravel()

    def _preconditioner(self):
        if self._ml is None:
            # pyamg draws from the global RNG while estimating spectral
            # radii; pin the state so identical matrices yield bitwise
            # identical hierarchies, then restore it
            state = np.random.get_state()
            try:
                np.random.seed(0)
                self._ml = pyamg.smoothed_aggregation_solver(
                    self.matrix.tocsr(), max_coarse=16
                )
            finally:
                np.random.set_state(state)
        return self._ml.aspreconditioner(cycle="V")

    def solve_interior(self, b: np.ndarray) -> np.ndarray:
        """PCG solve of the interior system to relative residual tol."""
        if not np.any(b):
            return np.zeros_like(b)
        x, info = spla.cg(
            self.matrix,
            b,
            rtol=self.tol,
            atol=0.0,
            maxiter=self.maxiter,
            M=self._preconditioner(),
        )
        if info != 0:
            raise SolverConvergenceError(
                f"CG failed to reach rtol {self.tol} within {self.maxiter} iterations"
            )
        return x


def assemble(sigma: Conductivity, grid: Grid | None = None) -> DirichletSystem:
    """Flux-form 5-point system for div(sigma grad) with Dirichlet boundary."""
    if grid is not None and grid != sigma.grid:
        raise ValueError("conductivity lives on a different grid")
    return DirichletSystem(sigma)


def _compose(sys: DirichletSystem, interior: np.ndarray, boundary: ScalarField | None):
    n = sys.grid.n
    values = np.zeros((n + 1, n + 1))
    if boundary is not None:
        values[:] = boundary.values
    values[1:-1, 1:-1] = interior.reshape(n - 1, n - 1)
    return ScalarField(sys.grid, values)


def solve_dirichlet(
    sys: DirichletSystem, f: ScalarField, rhs: ScalarField
) -> ScalarField:
    """Solve div(sigma grad u) = rhs in the interior with u = f on the ring.

    Boundary data is lifted into the right-hand side so every equation runs
    through the same SPD interior system.
    """
    check_same_grid(f, rhs)
    if f.grid != sys.grid:
        raise ValueError("fields live on a different grid than the system")
    b = -rhs.interior().ravel() + sys.boundary_lift(f)
    return _compose(sys, sys.solve_interior(b), f)


def solve_zero_bc(sys: DirichletSystem, rhs: ScalarField) -> ScalarField:
    """Homogeneous-Dirichlet inverse: solve div(sigma grad u) = rhs, u = 0 on ring."""
    if rhs.grid != sys.grid:
        raise ValueError("rhs lives on a different grid than the system")
    return _compose(sys, sys.solve_interior(-rhs.interior().ravel()), None)


def flux_divergence(coef: ScalarField, u: ScalarField) -> ScalarField:
    """div(coef grad u) at interior nodes with the same flux stencil as
    :func:`assemble`; zero on the boundary ring."""
    grid = check_same_grid(coef, u)
    h = grid.h
    c = coef.values
    v = u.values
    cx, cy = _interface_averages(c)
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = (
        cx[1:-1, 1:] * (v[1:-1, 2:] - v[1:-1, 1:-1])
        - cx[1:-1, :-1] * (v[1:-1, 1:-1] - v[1:-1, :-2])
        + cy[1:, 1:-1] * (v[2:, 1:-1] - v[1:-1, 1:-1])
        - cy[:-1, 1:-1] * (v[1:-1, 1:-1] - v[:-2, 1:-1])
    ) / h**2
    return ScalarField(grid, out)


def perturbation_rhs_matrix(u0: ScalarField) -> sp.csr_matrix:
    """Sparse matrix K with (K h)_interior = div(h grad u0) for the flux
    stencil, h given as a flattened full-grid field.

    This is the linear-in-coefficient view of :func:`flux_divergence` and is
    what makes the discrete forward differential an exact matrix whose
    transpose is available to the inversion module.
    """
    grid = u0.grid
    n, h = grid.n, grid.h
    m = n - 1
    v = u0.values
    nodes = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    center = nodes[1:-1, 1:-1].ravel()
    rows_list, cols_list, vals_list = [], [], []
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = nodes[1 + dj : n + dj, 1 + di : n + di].ravel()
        dv = (
            v[1 + dj : n + dj, 1 + di : n + di] - v[1:-1, 1:-1]
        ).ravel() / (2.0 * h**2)
        rows_list += [np.arange(m * m), np.arange(m * m)]
        cols_list += [center, nb]
        vals_list += [dv, dv]
    rows = np.concatenate(rows_list)
    cols = np.concatenate(cols_list)
    vals = np.concatenate(vals_list)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m * m, (n + 1) ** 2))
