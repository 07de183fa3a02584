"""The forward map F(sigma) = sigma |grad u|^p, its first and second
differentials, and the Taylor-remainder machinery.

The differentials are the exact derivatives of the *discrete* forward map:
the auxiliary solves use the same flux stencil as the potential equation, so
finite-difference checks in epsilon see clean first/second/third-order decay
instead of bottoming out on discretization mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import mesh
from .elliptic import (
    Conductivity,
    DirichletSystem,
    assemble,
    flux_divergence,
    solve_dirichlet,
    solve_zero_bc,
)
from .errors import GradientFloorViolated
from .mesh import Grid, ScalarField, VectorField, check_same_grid

__all__ = [
    "DEFAULT_GRAD_FLOOR",
    "LinearizationBundle",
    "build_bundle",
    "solve_potential",
    "forward_map",
    "solve_v",
    "solve_w",
    "differential",
    "second_differential",
    "taylor_remainder",
]

DEFAULT_GRAD_FLOOR = 1e-3


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p} (p > 1 is hyperbolic)")
    return p


def _check_floor(grad: VectorField, floor: float) -> np.ndarray:
    mag = grad.magnitude()
    if float(mag.min()) < floor:
        j, i = np.unravel_index(np.argmin(mag), mag.shape)
        raise GradientFloorViolated((int(i), int(j)), float(mag[j, i]), floor)
    return mag


@dataclass
class LinearizationBundle:
    """Everything needed to evaluate dF at one base point sigma_0.

    Immutable in use; safe to share across concurrent dF evaluations.
    """

    sigma0: Conductivity
    u0: ScalarField
    grad_u0: VectorField
    speed_pow: ScalarField          # |grad u0|^p
    p: float
    grad_floor: float
    system: DirichletSystem = dc_field(repr=False)
    grad_mag: np.ndarray = dc_field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    def base_data(self) -> ScalarField:
        """F(sigma_0) on the bundle's own discretization."""
        return ScalarField(self.grid, self.sigma0.field.values * self.speed_pow.values)


def build_bundle(
    sigma0: Conductivity,
    f: ScalarField,
    p: float,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> LinearizationBundle:
    p = _check_p(p)
    system = assemble(sigma0)
    u0 = solve_dirichlet(system, f, ScalarField.zeros(sigma0.grid))
    grad_u0 = mesh.gradient(u0)
    mag = _check_floor(grad_u0, grad_floor)
    speed_pow = ScalarField(sigma0.grid, mag**p)
    return LinearizationBundle(
        sigma0=sigma0,
        u0=u0,
        grad_u0=grad_u0,
        speed_pow=speed_pow,
        p=p,
        grad_floor=grad_floor,
        system=system,
        grad_mag=mag,
    )


def solve_potential(sigma: Conductivity, f: ScalarField) -> ScalarField:
    """sigma-harmonic potential with Dirichlet data f."""
    return solve_dirichlet(assemble(sigma), f, ScalarField.zeros(sigma.grid))


def forward_map(
    sigma: Conductivity,
    f: ScalarField,
    p: float,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> ScalarField:
    """Interior power-density data sigma |grad u|^p."""
    p = _check_p(p)
    u = solve_potential(sigma, f)
    mag = _check_floor(mesh.gradient(u), grad_floor)
    return ScalarField(sigma.grid, sigma.field.values * mag**p)


def solve_v(bundle: LinearizationBundle, h: ScalarField) -> ScalarField:
    """First variation of the potential: div(sigma0 grad v) = -div(h grad u0),
    v = 0 on the ring.  Linear in h."""
    check_same_grid(h, bundle.u0)
    rhs = -flux_divergence(h, bundle.u0)
    return solve_zero_bc(bundle.system, rhs)


def solve_w(
    bundle: LinearizationBundle, h: ScalarField, v: ScalarField
) -> ScalarField:
    """Second variation: div(sigma0 grad w) = -2 div(h grad v), w = 0 on ring."""
    check_same_grid(h, v, bundle.u0)
    rhs = -2.0 * flux_divergence(h, v)
    return solve_zero_bc(bundle.system, rhs)


def differential(bundle: LinearizationBundle, h: ScalarField) -> ScalarField:
    """dF(h) = h |grad u0|^p + p |grad u0|^(p-2) sigma0 grad u0 . grad v(h)."""
    v = solve_v(bundle, h)
    gv = mesh.gradient(v)
    g0 = bundle.grad_u0
    p = bundle.p
    dot = g0.x * gv.x + g0.y * gv.y
    values = (
        h.values * bundle.speed_pow.values
        + p * bundle.grad_mag ** (p - 2.0) * bundle.sigma0.field.values * dot
    )
    return ScalarField(bundle.grid, values)


def second_differential(
    sigma_t: Conductivity,
    f: ScalarField,
    p: float,
    h: ScalarField,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> ScalarField:
    """Second differential d2F_{sigma_t}(h, h).

    Exact second derivative of sigma |grad u|^p along sigma_t + t h, derived
    by differentiating the discrete map twice via the chain rule; a
    third-order Taylor check in the test suite pins down every coefficient.
    """
    bundle = build_bundle(sigma_t, f, p, grad_floor)
    v = solve_v(bundle, h)
    w = solve_w(bundle, h, v)
    gv = mesh.gradient(v)
    gw = mesh.gradient(w)
    g0 = bundle.grad_u0
    mag = bundle.grad_mag
    st = sigma_t.field.values
    dot_uv = g0.x * gv.x + g0.y * gv.y
    dot_uw = g0.x * gw.x + g0.y * gw.y
    dot_vv = gv.x * gv.x + gv.y * gv.y
    values = (
        2.0 * p * h.values * mag ** (p - 2.0) * dot_uv
        + p * st * mag ** (p - 2.0) * (dot_vv + dot_uw)
        + p * (p - 2.0) * st * mag ** (p - 4.0) * dot_uv**2
    )
    return ScalarField(bundle.grid, values)


def taylor_remainder(
    sigma0: Conductivity,
    sigma: Conductivity,
    f: ScalarField,
    p: float,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> tuple[ScalarField, float]:
    """R = F(sigma) - F(sigma0) - dF(sigma - sigma0) and the quadratic bound
    ratio ||R|| / ||sigma - sigma0||_C2^2 (0 when sigma == sigma0)."""
    bundle = build_bundle(sigma0, f, p, grad_floor)
    h = sigma.field - sigma0.field
    R = (
        forward_map(sigma, f, p, grad_floor)
        - bundle.base_data()
        - differential(bundle, h)
    )
    denom = mesh.c2_norm(h) ** 2
    ratio = mesh.l2_norm(R) / denom if denom > 0 else 0.0
    return R, ratio
