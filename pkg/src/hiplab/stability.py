"""Exponent arithmetic for the abstract Hoelder-stability theorem and the
empirical interpolation-estimate sweeps.

The planner turns a requested stability exponent theta into a consistent set
of interpolation parameters (alpha_1, mu_i, beta, s, s_1); the validator
re-checks every displayed inequality.  The sweep measures the constant in
the conditional linearized stability estimate

    ||h|| <= C ||dF(h)||_{H1}^{alpha_1} ||h||_{H^{s_1}}^{1-alpha_1}

on random band-limited perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import mesh
from .forward import LinearizationBundle, differential
from .inversion import SweepRecord

__all__ = [
    "ExponentPlan",
    "beta_of",
    "plan_exponents",
    "validate_plan",
    "plan_to_text",
    "linear_stability_sweep",
]


@dataclass(frozen=True)
class ExponentPlan:
    """One consistent parameter set for the abstract stability theorem."""

    n: int
    p: float
    alpha: float          # Taylor-remainder order (2 for a C2 forward map)
    alpha1: float
    mu1: float
    mu2: float
    mu3: float
    mu: float
    beta: float
    theta: float
    s1: float
    s: float
    warnings: tuple[str, ...] = ()


def beta_of(mu: float, mu3: float) -> float:
    """beta = mu / (1 - mu3 (1 - mu)); mu3 = 1 gives Lipschitz (beta = 1)."""
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    if not 0.0 <= mu3 <= 1.0:
        raise ValueError(f"mu3 must lie in [0, 1], got {mu3}")
    denom = 1.0 - mu3 * (1.0 - mu)
    if denom <= 0:
        raise ValueError(f"beta denominator 1 - mu3(1 - mu) = {denom} <= 0")
    return mu / denom


def plan_exponents(theta: float, p: float, n: int = 2) -> ExponentPlan:
    """Build a parameter plan achieving Hoelder exponent theta.

    Recipe: fix beta = (1 + max(theta, 1/2)) / 2, strictly between
    max(theta, 1/2) and 1.  For p < 1 the linearized estimate is Lipschitz
    (alpha_1 = 1) and mu_1 is shrunk from 1/2 until mu < min(1/2, beta);
    for p = 1 the interpolation branch sets mu_1 = alpha_1 and shrinks
    alpha_1 instead.  Then mu_3 is solved from the beta formula,
    s_1 = (n + 4) / (2 (1 - mu_1)) and s = s_1 / (1 - mu_3).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    alpha = 2.0
    mu2 = 1.0
    beta = 0.5 * (1.0 + max(theta, 0.5))
    cap = min(0.5, beta)

    if p < 1.0:
        alpha1 = 1.0
        mu1 = 0.5
        while alpha1 * mu1 * mu2 >= cap:
            mu1 *= 0.9
    else:
        alpha1 = 0.5
        while alpha1 * alpha1 * mu2 >= cap:
            alpha1 *= 0.9
        mu1 = alpha1
    mu = alpha1 * mu1 * mu2
    if not mu < cap:
        raise ValueError(f"no admissible alpha1 found for theta={theta}, p={p}")

    # invert beta = mu / (1 - mu3 (1 - mu)) for mu3
    mu3 = (beta - mu) / (beta * (1.0 - mu))
    s1 = (n + 4.0) / (2.0 * (1.0 - mu1))
    s = s1 / (1.0 - mu3)

    warnings = []
    if np.isclose((1.0 - mu1) * s1, n / 2.0 + 2.0):
        warnings.append(
            "(1-mu1)*s1 equals n/2+2 exactly; the smoothing condition holds "
            "only with equality for this mu1"
        )
    mu3_floor = max(0.0, (1.0 - alpha * mu) / (1.0 - mu))
    if mu3 < mu3_floor:
        warnings.append(f"mu3={mu3:.6g} below its lower bound {mu3_floor:.6g}")
    return ExponentPlan(
        n=n, p=p, alpha=alpha, alpha1=alpha1, mu1=mu1, mu2=mu2, mu3=mu3,
        mu=mu, beta=beta, theta=theta, s1=s1, s=s, warnings=tuple(warnings),
    )


def validate_plan(plan: ExponentPlan) -> list[tuple[str, bool, float, float]]:
    """Re-check every displayed inequality; returns (constraint, ok, lhs, rhs)
    rows and never raises."""
    rows: list[tuple[str, bool, float, float]] = []

    def check(name, lhs, rhs, ok):
        rows.append((name, bool(ok), float(lhs), float(rhs)))

    check("mu in (0,1)", plan.mu, 1.0, 0.0 < plan.mu < 1.0)
    check("mu = alpha1*mu1*mu2", plan.mu, plan.alpha1 * plan.mu1 * plan.mu2,
          abs(plan.mu - plan.alpha1 * plan.mu1 * plan.mu2) <= 1e-12)
    floor = max(0.0, (1.0 - plan.alpha * plan.mu) / (1.0 - plan.mu))
    check("mu3 >= max{0,(1-alpha*mu)/(1-mu)}", plan.mu3, floor, plan.mu3 >= floor - 1e-12)
    check("mu3 <= 1", plan.mu3, 1.0, plan.mu3 <= 1.0 + 1e-12)
    try:
        beta_again = beta_of(plan.mu, plan.mu3)
    except ValueError:
        beta_again = np.nan
    check("beta formula", plan.beta, beta_again,
          np.isfinite(beta_again) and abs(plan.beta - beta_again) <= 1e-12)
    check("(1-alpha1)*s1 >= 2", (1.0 - plan.alpha1) * plan.s1, 2.0,
          plan.alpha1 == 1.0 or (1.0 - plan.alpha1) * plan.s1 >= 2.0 - 1e-12)
    lhs = (1.0 - plan.mu1) * plan.s1
    check("(1-mu1)*s1 >= n/2+2", lhs, plan.n / 2.0 + 2.0, lhs >= plan.n / 2.0 + 2.0 - 1e-12)
    check("(1-mu3)*s = s1", (1.0 - plan.mu3) * plan.s, plan.s1,
          abs((1.0 - plan.mu3) * plan.s - plan.s1) <= 1e-12 * max(1.0, plan.s1))
    return rows


def plan_to_text(plan: ExponentPlan) -> str:
    """Flat key=value serialization (one key per line, deterministic order)."""
    lines = [
        f"n={plan.n}",
        f"p={plan.p:.12g}",
        f"theta={plan.theta:.12g}",
        f"alpha={plan.alpha:.12g}",
        f"alpha1={plan.alpha1:.12g}",
        f"mu1={plan.mu1:.12g}",
        f"mu2={plan.mu2:.12g}",
        f"mu3={plan.mu3:.12g}",
        f"mu={plan.mu:.12g}",
        f"beta={plan.beta:.12g}",
        f"s1={plan.s1:.12g}",
        f"s={plan.s:.12g}",
    ]
    for i, w in enumerate(plan.warnings):
        lines.append(f"warning{i}={w}")
    return "\n".join(lines) + "\n"


def linear_stability_sweep(
    bundle: LinearizationBundle,
    samples: int,
    seed: int,
    alpha1: float = 0.5,
    s1: float = 6.0,
    kmax: int = 8,
    amplitude: float = 0.1,
) -> tuple[list[SweepRecord], float]:
    """Measure C* = max_h ||h|| / (||dF(h)||_{H1}^{alpha1} ||h||_{H^{s1}}^{1-alpha1})
    over seeded band-limited draws.  Returns the per-sample records and C*."""
    if samples < 10:
        raise ValueError("need at least 10 samples")
    grid = bundle.grid
    records = []
    c_star = 0.0
    for k in range(samples):
        h = mesh.random_band_limited(grid, kmax, seed + k)
        h = mesh.ScalarField(grid, amplitude * h.values)
        l2 = mesh.l2_norm(h)
        if l2 == 0:  # pragma: no cover - nonzero by construction
            continue
        dF = differential(bundle, h)
        h1_dF = mesh.h1_norm(dF)
        hs1 = mesh.sobolev_norm(h, s1)
        ratio = l2 / (h1_dF**alpha1 * hs1 ** (1.0 - alpha1))
        c_star = max(c_star, ratio)
        records.append(
            SweepRecord(
                label=f"sample-{k}", eps=float(k), l2_h=l2, h1_dF=h1_dF,
                hs1_h=hs1, rec_err=0.0, extra=ratio,
            )
        )
    return records, c_star
