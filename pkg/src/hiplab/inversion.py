"""Linearized Tikhonov inversion, the exact discrete adjoint of dF,
Gauss-Newton reconstruction, seeded noise, and power-law fitting.

The adjoint is the literal matrix transpose of the discrete differential
(embedding, flux-perturbation matrix, gradient stencils, SPD solve), so the
dot-product test holds to solver tolerance rather than discretization order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import mesh
from .elliptic import Conductivity, perturbation_rhs_matrix
from .errors import ReconstructionDivergence, SolverConvergenceError
from .forward import (
    DEFAULT_GRAD_FLOOR,
    LinearizationBundle,
    build_bundle,
    differential,
    forward_map,
)
from .mesh import Grid, ScalarField, check_same_grid

__all__ = [
    "InversionOptions",
    "SweepRecord",
    "apply_dF_adjoint",
    "linear_invert",
    "gauss_newton_reconstruct",
    "make_noise",
    "fit_exponent",
    "sweep_to_csv",
]


@dataclass(frozen=True)
class InversionOptions:
    reg_lambda: float = 1e-8
    max_outer_iters: int = 20
    cg_tol: float = 1e-6            # relative data-misfit stopping level
    damping: float = 1.0
    sigma_projection_min: float = 0.1
    noise_seed: int = 0
    cg_max_iter: int = 80           # inner normal-equation CG cap
    normal_tol: float = 1e-10       # inner CG residual reduction
    c2_radius: float = 1e4          # blow-up guard on C2 drift from the init

    def __post_init__(self):
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.sigma_projection_min <= 0:
            raise ValueError("sigma_projection_min must be > 0")


@dataclass(frozen=True)
class SweepRecord:
    """One row of the fixed CSV schema label,eps,l2_h,h1_dF,hs1_h,rec_err,extra."""

    label: str
    eps: float
    l2_h: float
    h1_dF: float
    hs1_h: float
    rec_err: float
    extra: float

    def __post_init__(self):
        for name in ("eps", "l2_h", "h1_dF", "hs1_h", "rec_err", "extra"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"SweepRecord.{name} must be finite and >= 0, got {v}")


CSV_HEADER = "label,eps,l2_h,h1_dF,hs1_h,rec_err,extra"


def sweep_to_csv(records) -> str:
    """Deterministic CSV serialization of sweep records."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.label},{r.eps:.12g},{r.l2_h:.12g},{r.h1_dF:.12g},"
            f"{r.hs1_h:.12g},{r.rec_err:.12g},{r.extra:.12g}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# exact discrete adjoint of the differential

def _adjoint_pieces(bundle: LinearizationBundle):
    """Cache the sparse pieces of dF = S E + M Gfull Ev A^-1 K E on the bundle."""
    cache = getattr(bundle, "_adjoint_cache", None)
    if cache is None:
        n = bundle.grid.n
        K = perturbation_rhs_matrix(bundle.u0)
        emb = mesh.interior_embedding(n)
        KE = (K @ emb).tocsr()
        gx, gy = mesh.gradient_matrices(n)
        cache = {"KE": KE, "gx": gx, "gy": gy, "emb": emb}
        bundle._adjoint_cache = cache
    return cache


def apply_dF_interior(bundle: LinearizationBundle, h_int: np.ndarray) -> np.ndarray:
    """dF(h) on the full grid for an interior (zero-boundary) h vector."""
    pieces = _adjoint_pieces(bundle)
    v_int = bundle.system.solve_interior(pieces["KE"] @ h_int)
    z = (pieces["emb"] @ v_int)
    coef = bundle.p * bundle.sigma0.field.values.ravel() * (
        bundle.grad_mag.ravel() ** (bundle.p - 2.0)
    )
    term2 = coef * (
        bundle.grad_u0.x.ravel() * (pieces["gx"] @ z)
        + bundle.grad_u0.y.ravel() * (pieces["gy"] @ z)
    )
    out = bundle.speed_pow.values.ravel() * (pieces["emb"] @ h_int) + term2
    return out


def apply_dF_adjoint(bundle: LinearizationBundle, g: ScalarField) -> ScalarField:
    """dF*(g): adjoint of dF between L2 (trapezoid) data space and the
    zero-boundary parameter space, satisfying <dF h, g> = <h, dF* g>."""
    check_same_grid(g, bundle.u0)
    pieces = _adjoint_pieces(bundle)
    grid = bundle.grid
    w = grid.trapezoid_weights().ravel()
    gv = g.values.ravel()
    coef = bundle.p * bundle.sigma0.field.values.ravel() * (
        bundle.grad_mag.ravel() ** (bundle.p - 2.0)
    )
    q_full = pieces["gx"].T @ (w * coef * bundle.grad_u0.x.ravel() * gv) + (
        pieces["gy"].T @ (w * coef * bundle.grad_u0.y.ravel() * gv)
    )
    q_int = pieces["emb"].T @ q_full
    psi = bundle.system.solve_interior(q_int)
    out_int = (
        pieces["emb"].T @ (bundle.speed_pow.values.ravel() * w * gv)
        + pieces["KE"].T @ psi
    ) / grid.h**2
    n = grid.n
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = out_int.reshape(n - 1, n - 1)
    return ScalarField(grid, values)


# ---------------------------------------------------------------------------
# H1-regularized linear inversion

def _h1_gram_apply(grid: Grid, x_int: np.ndarray) -> np.ndarray:
    """Spectral H1 Gram on interior vectors: multiplier 1 + pi^2(k^2+l^2)."""
    n = grid.n
    c = scipy.fft.dstn(x_int.reshape(n - 1, n - 1), type=1)
    k = np.arange(1, n)
    lam = np.pi**2 * (k[None, :] ** 2 + k[:, None] ** 2)
    back = scipy.fft.idstn((1.0 + lam) * c, type=1)
    return back.ravel()


def linear_invert(
    bundle: LinearizationBundle,
    data_perturbation: ScalarField,
    opts: InversionOptions,
    track_objective: bool = False,
):
    """Minimize ||dF(h) - delta_d||_L2^2 + lambda ||h||_H1^2 over zero-boundary
    h by conjugate gradients on the regularized normal equations.

    Returns the minimizer; with track_objective also the per-iteration
    objective values (non-increasing, a CG invariant).
    """
    check_same_grid(data_perturbation, bundle.u0)
    grid = bundle.grid
    w = grid.trapezoid_weights().ravel()
    lam = opts.reg_lambda

    def normal_apply(x):
        dF_full = apply_dF_interior(bundle, x)
        g = ScalarField(grid, dF_full.reshape(grid.shape))
        back = apply_dF_adjoint(bundle, g).interior().ravel()
        return back + lam * _h1_gram_apply(grid, x)

    b = apply_dF_adjoint(bundle, data_perturbation).interior().ravel()

    def objective(x):
        dF_full = apply_dF_interior(bundle, x)
        res = dF_full - data_perturbation.values.ravel()
        misfit = float(np.sum(w * res * res))
        reg = grid.h**2 * float(x @ _h1_gram_apply(grid, x))
        return misfit + lam * reg

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    b_norm = np.sqrt(float(b @ b))
    history = [objective(x)] if track_objective else None
    if b_norm > 0:
        for _ in range(opts.cg_max_iter):
            if np.sqrt(rr) <= opts.normal_tol * b_norm:
                break
            Ap = normal_apply(p)
            alpha = rr / float(p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            rr_new = float(r @ r)
            p = r + (rr_new / rr) * p
            rr = rr_new
            if track_objective:
                history.append(objective(x))

    n = grid.n
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = x.reshape(n - 1, n - 1)
    h = ScalarField(grid, values)
    if track_objective:
        return h, history
    return h


# ---------------------------------------------------------------------------
# Gauss-Newton outer loop

@dataclass(frozen=True)
class IterateLog:
    iteration: int
    misfit: float
    step_norm: float


def gauss_newton_reconstruct(
    sigma_init: Conductivity,
    f: ScalarField,
    p: float,
    data: ScalarField,
    opts: InversionOptions,
    grad_floor: float = DEFAULT_GRAD_FLOOR,
) -> tuple[Conductivity, list[IterateLog]]:
    """Damped Gauss-Newton with positivity projection and backtracking.

    Each step linearizes at the current iterate, solves the H1-regularized
    normal equations for the update, clamps at sigma_projection_min, and
    halves the step until the misfit decreases.  Raises
    ReconstructionDivergence after three consecutive steps that cannot
    reduce the misfit, or when the iterate leaves the C2 trust region.
    """
    check_same_grid(sigma_init.field, f, data)
    sigma = sigma_init
    data_norm = mesh.l2_norm(data)
    if data_norm == 0:
        raise ValueError("data field is identically zero")

    def misfit_of(s: Conductivity) -> float:
        try:
            pred = forward_map(s, f, p, grad_floor)
        except SolverConvergenceError:
            return np.inf
        return mesh.l2_norm(data - pred) / data_norm

    log: list[IterateLog] = []
    stalled = 0
    misfit = misfit_of(sigma)
    for it in range(opts.max_outer_iters + 1):
        if misfit < opts.cg_tol or it == opts.max_outer_iters:
            log.append(IterateLog(it, misfit, 0.0))
            break
        bundle = build_bundle(sigma, f, p, grad_floor)
        residual = data - bundle.base_data()
        step = linear_invert(bundle, residual, opts)
        step_norm = mesh.l2_norm(step)
        log.append(IterateLog(it, misfit, step_norm))
        if step_norm <= 1e-9 * (1.0 + mesh.l2_norm(sigma.field)):
            # at the regularization floor: no meaningful update remains
            break
        scale = opts.damping
        accepted = False
        for _ in range(8):
            trial = Conductivity(
                ScalarField(
                    sigma.grid,
                    np.maximum(
                        sigma.field.values + scale * step.values,
                        opts.sigma_projection_min,
                    ),
                ),
                opts.sigma_projection_min,
            )
            trial_misfit = misfit_of(trial)
            if trial_misfit < misfit:
                sigma, misfit = trial, trial_misfit
                accepted = True
                break
            scale *= 0.5
        if accepted:
            stalled = 0
        else:
            stalled += 1
            if stalled >= 3:
                raise ReconstructionDivergence(
                    "misfit could not be reduced for 3 consecutive steps"
                )
        drift = mesh.c2_norm(sigma.field - sigma_init.field)
        if drift > opts.c2_radius:
            raise ReconstructionDivergence(
                f"iterate left the C2 trust region ({drift:.3g} > {opts.c2_radius})"
            )
    return sigma, log


# ---------------------------------------------------------------------------
# noise and power-law fits

def make_noise(grid: Grid, level: float, seed: int, ref_h1: float = 1.0) -> ScalarField:
    """Smooth seeded noise: white nodal Gaussian pushed through one
    homogeneous-Dirichlet solve with sigma = 1, rescaled so its H1 norm is
    level * ref_h1.  level = 0 gives the zero field."""
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0.0:
        return ScalarField.zeros(grid)
    rng = np.random.default_rng(seed)
    n, h = grid.n, grid.h
    white = rng.standard_normal((n - 1, n - 1))
    # invert the 5-point Laplacian spectrally (its DST-I eigenbasis is exact),
    # which keeps the output byte-reproducible across BLAS configurations
    k = np.arange(1, n)
    lam1d = (4.0 / h**2) * np.sin(0.5 * np.pi * k * h) ** 2
    coeffs = scipy.fft.dstn(white, type=1) / (lam1d[None, :] + lam1d[:, None])
    inner = scipy.fft.idstn(coeffs, type=1)
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = inner
    smooth = ScalarField(grid, values)
    cur = mesh.h1_norm(smooth)
    return ScalarField(grid, smooth.values * (level * ref_h1 / cur))


def fit_exponent(records, x_key: str, y_key: str) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y) over the records; returns
    (slope, intercept, r_squared)."""
    if len(records) < 3:
        raise ValueError("need at least 3 records to fit an exponent")
    xs = np.array([getattr(r, x_key) for r in records], dtype=float)
    ys = np.array([getattr(r, y_key) for r in records], dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit requires positive entries")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2
