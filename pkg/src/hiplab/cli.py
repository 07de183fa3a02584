"""Configuration-driven command surface.

Commands read a flat key=value config (``#`` comments allowed), run one
experiment, and write deterministic artifacts: hipfield dumps, CSV sweeps in
the fixed ``label,eps,l2_h,h1_dF,hs1_h,rec_err,extra`` schema, and key=value
summaries.  Exit codes are a stable contract: 0 ok, 1 verify failure,
2 config error, 3 gradient floor, 4 solver failure, 5 divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mesh
from .elliptic import Conductivity, assemble
from .errors import (
    ConfigError,
    EigenConvergenceError,
    GradientFloorViolated,
    HipError,
    ReconstructionDivergence,
    SolverConvergenceError,
)
from .factorization import assemble_L, factorization_residual
from .forward import (
    DEFAULT_GRAD_FLOOR,
    build_bundle,
    differential,
    forward_map,
    taylor_remainder,
)
from .inversion import (
    InversionOptions,
    SweepRecord,
    apply_dF_adjoint,
    fit_exponent,
    gauss_newton_reconstruct,
    make_noise,
    sweep_to_csv,
)
from .mesh import Grid, ScalarField
from .stability import linear_stability_sweep, plan_exponents, plan_to_text, validate_plan

__all__ = ["main", "parse_config", "ExperimentConfig"]


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 64
    p: float = 1.0
    seed: int = 0
    sigma: str = "constant(1.0)"
    sigma_init: str = "constant(1.0)"
    boundary: str = "linear-x"
    grad_floor: float = DEFAULT_GRAD_FLOOR
    reg_lambda: float = 1e-8
    max_outer_iters: int = 20
    cg_tol: float = 1e-6
    damping: float = 1.0
    sigma_min: float = 0.1
    noise_level: float = 0.0
    levels: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    samples: int = 10
    kmax: int = 8
    theta: float = 0.5

    def inversion_options(self) -> InversionOptions:
        try:
            return InversionOptions(
                reg_lambda=self.reg_lambda,
                max_outer_iters=self.max_outer_iters,
                cg_tol=self.cg_tol,
                damping=self.damping,
                sigma_projection_min=self.sigma_min,
                noise_seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_INT_KEYS = {"n", "seed", "max_outer_iters", "samples", "kmax"}
_FLOAT_KEYS = {
    "p", "grad_floor", "reg_lambda", "cg_tol", "damping",
    "sigma_min", "noise_level", "theta",
}
_STR_KEYS = {"sigma", "sigma_init", "boundary"}


def parse_config(path: str | Path) -> ExperimentConfig:
    """Parse the flat key=value format; unknown keys and malformed values
    raise ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    fields: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _INT_KEYS:
                fields[key] = int(value)
            elif key in _FLOAT_KEYS:
                fields[key] = float(value)
            elif key in _STR_KEYS:
                fields[key] = value
            elif key == "levels":
                fields[key] = tuple(float(t) for t in value.split(",") if t.strip())
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    cfg = ExperimentConfig(**fields)
    if not 0.0 < cfg.p <= 1.0:
        raise ConfigError(f"p must lie in (0, 1], got {cfg.p}")
    if cfg.n < 4:
        raise ConfigError(f"n must be >= 4, got {cfg.n}")
    if cfg.noise_level < 0:
        raise ConfigError(f"noise_level must be >= 0, got {cfg.noise_level}")
    if not 0.0 < cfg.theta < 1.0:
        raise ConfigError(f"theta must lie in (0, 1), got {cfg.theta}")
    return cfg


def _parse_call(spec: str) -> tuple[str, list[str]]:
    spec = spec.strip()
    if "(" in spec:
        if not spec.endswith(")"):
            raise ConfigError(f"malformed preset {spec!r}")
        name, _, inner = spec[:-1].partition("(")
        args = [a.strip() for a in inner.split(",")] if inner.strip() else []
        return name.strip(), args
    return spec, []


def build_sigma(spec: str, grid: Grid) -> Conductivity:
    """Conductivity presets: constant(c) | bump(a,x0,y0,r) | expx | from-file(path)."""
    name, args = _parse_call(spec)
    X, Y = grid.coords()
    try:
        if name == "constant":
            (c,) = (float(a) for a in args) if args else (1.0,)
            values = np.full(grid.shape, c)
        elif name == "bump":
            a, x0, y0, r = (float(v) for v in args)
            values = 1.0 + a * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / r)
        elif name == "expx":
            values = np.exp(X)
        elif name == "from-file":
            (path,) = args
            field = mesh.read_field(path)
            if field.grid != grid:
                raise ConfigError(
                    f"field in {path} has n={field.grid.n}, config wants n={grid.n}"
                )
            return Conductivity.certify(field)
        else:
            raise ConfigError(f"unknown sigma preset {name!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sigma preset {spec!r}: {exc}") from exc
    try:
        return Conductivity.certify(ScalarField(grid, values))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_boundary(spec: str, grid: Grid) -> ScalarField:
    """Boundary presets: linear-x | affine(a,b) meaning f = a x + b y."""
    name, args = _parse_call(spec)
    X, Y = grid.coords()
    if name == "linear-x":
        return ScalarField(grid, X.copy())
    if name == "affine":
        try:
            a, b = (float(v) for v in args)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad boundary preset {spec!r}") from exc
        return ScalarField(grid, a * X + b * Y)
    raise ConfigError(f"unknown boundary preset {name!r}")


def _write_text(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _summary(pairs) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs)


# ---------------------------------------------------------------------------
# commands

def cmd_forward(cfg: ExperimentConfig, out: Path) -> int:
    grid = Grid(cfg.n)
    sigma = build_sigma(cfg.sigma, grid)
    f = build_boundary(cfg.boundary, grid)
    bundle = build_bundle(sigma, f, cfg.p, cfg.grad_floor)
    data = bundle.base_data()
    out.mkdir(parents=True, exist_ok=True)
    mesh.write_field(out / "u.field", bundle.u0)
    mesh.write_field(out / "data.field", data)
    _write_text(out, "summary.txt", _summary([
        ("n", cfg.n),
        ("p", f"{cfg.p:.12g}"),
        ("min_grad", f"{float(bundle.grad_mag.min()):.12g}"),
        ("u_l2", f"{mesh.l2_norm(bundle.u0):.12g}"),
        ("data_l2", f"{mesh.l2_norm(data):.12g}"),
        ("data_h1", f"{mesh.h1_norm(data):.12g}"),
    ]))
    return 0


def _verify_checks(cfg: ExperimentConfig):
    """Yield (name, passed, detail) for the invariant suite at config scale."""
    grid = Grid(cfg.n)
    sigma = build_sigma(cfg.sigma, grid)
    f = build_boundary(cfg.boundary, grid)
    rng = np.random.default_rng(cfg.seed)

    # sigma=1, f=x has the exact discrete solution u=x
    ones = Conductivity.certify(ScalarField.constant(grid, 1.0))
    X, _ = grid.coords()
    u = build_bundle(ones, ScalarField(grid, X.copy()), 1.0, cfg.grad_floor).u0
    err = float(np.abs(u.values - X).max())
    yield "harmonic-linear-exact", err <= 1e-8, f"max_err={err:.3e}"

    bundle = build_bundle(sigma, f, cfg.p, cfg.grad_floor)

    # adjoint identity on seeded pairs
    worst = 0.0
    for _ in range(5):
        h = mesh.random_band_limited(grid, 6, int(rng.integers(2**31)))
        g = ScalarField(grid, rng.standard_normal(grid.shape))
        lhs = mesh.l2_inner(differential(bundle, h), g)
        rhs = mesh.l2_inner(h, apply_dF_adjoint(bundle, g))
        worst = max(worst, abs(lhs - rhs) / (mesh.l2_norm(h) * mesh.l2_norm(g)))
    yield "adjoint-identity", worst <= 1e-8, f"max_rel={worst:.3e}"

    # Taylor remainder is second order in the perturbation size
    h0 = mesh.random_band_limited(grid, 4, cfg.seed + 101)
    ratios = []
    for eps in (1e-1, 3e-2, 1e-2):
        pert = Conductivity.certify(
            ScalarField(grid, sigma.field.values * (1.0 + eps * h0.values))
        )
        R, _ = taylor_remainder(sigma, pert, f, cfg.p, cfg.grad_floor)
        ratios.append(mesh.l2_norm(R))
    slope = np.polyfit(np.log([1e-1, 3e-2, 1e-2]), np.log(ratios), 1)[0]
    yield "remainder-slope", abs(slope - 2.0) <= 0.1, f"slope={slope:.4f}"

    # operator factorization residual
    rho = mesh.random_band_limited(grid, 4, cfg.seed + 202)
    res = factorization_residual(
        ones, ScalarField(grid, X.copy()), cfg.p, rho, cfg.grad_floor
    )
    # the identity residual is first order in h; 5e-2 is the n=128 target
    res_tol = 5e-2 * max(1.0, 128.0 / cfg.n)
    yield "factorization-residual", res <= res_tol, f"residual={res:.3e}"

    # second-order factor reduces to the anisotropic Laplacian stencil
    L = assemble_L(ones, ScalarField(grid, X.copy()), cfg.p, cfg.grad_floor)
    m = grid.n - 1
    import scipy.sparse as sp
    one_d = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m)) / grid.h**2
    eye = sp.identity(m)
    expected = sp.kron(one_d, eye) + (1.0 - cfg.p) * sp.kron(eye, one_d)
    diff = abs(L.matrix - expected.tocsr()).max()
    yield "example-stencil", diff <= 1e-12, f"max_entry_diff={diff:.3e}"

    # exponent plan round-trips through its own validator
    plan = plan_exponents(cfg.theta, cfg.p)
    rows = validate_plan(plan)
    ok = all(r[1] for r in rows)
    yield "plan-validates", ok, f"checks={len(rows)}"


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    lines = []
    failed = []
    for name, passed, detail in _verify_checks(cfg):
        status = "PASS" if passed else "FAIL"
        lines.append(f"{name}: {status} ({detail})")
        if not passed:
            failed.append(name)
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    _write_text(out, "verify.txt", report)
    if failed:
        sys.stderr.write(f"failed checks: {', '.join(failed)}\n")
        return 1
    return 0


def cmd_reconstruct(cfg: ExperimentConfig, out: Path) -> int:
    grid = Grid(cfg.n)
    sigma_true = build_sigma(cfg.sigma, grid)
    sigma_init = build_sigma(cfg.sigma_init, grid)
    f = build_boundary(cfg.boundary, grid)
    clean = forward_map(sigma_true, f, cfg.p, cfg.grad_floor)
    noise = make_noise(grid, cfg.noise_level, cfg.seed, ref_h1=mesh.h1_norm(clean))
    data = clean + noise
    opts = cfg.inversion_options()
    rec, log = gauss_newton_reconstruct(
        sigma_init, f, cfg.p, data, opts, cfg.grad_floor
    )
    truth_norm = mesh.l2_norm(sigma_true.field)
    records = [
        SweepRecord(
            label=f"iter-{entry.iteration}",
            eps=float(entry.iteration),
            l2_h=entry.step_norm,
            h1_dF=entry.misfit,
            hs1_h=0.0,
            rec_err=mesh.l2_norm(rec.field - sigma_true.field) / truth_norm
            if entry is log[-1]
            else 0.0,
            extra=0.0,
        )
        for entry in log
    ]
    out.mkdir(parents=True, exist_ok=True)
    mesh.write_field(out / "sigma_rec.field", rec.field)
    _write_text(out, "iterates.csv", sweep_to_csv(records))
    _write_text(out, "summary.txt", _summary([
        ("iterations", log[-1].iteration),
        ("final_misfit", f"{log[-1].misfit:.12g}"),
        ("rec_err", f"{records[-1].rec_err:.12g}"),
    ]))
    return 0


def cmd_sweep_linear(cfg: ExperimentConfig, out: Path) -> int:
    grid = Grid(cfg.n)
    sigma = build_sigma(cfg.sigma, grid)
    f = build_boundary(cfg.boundary, grid)
    bundle = build_bundle(sigma, f, cfg.p, cfg.grad_floor)
    plan = plan_exponents(cfg.theta, cfg.p)
    alpha1 = plan.alpha1 if cfg.p == 1.0 else 1.0
    records, c_star = linear_stability_sweep(
        bundle, cfg.samples, cfg.seed, alpha1=alpha1, s1=plan.s1, kmax=cfg.kmax
    )
    _write_text(out, "sweep_linear.csv", sweep_to_csv(records))
    _write_text(out, "summary.txt", _summary([
        ("samples", len(records)),
        ("alpha1", f"{alpha1:.12g}"),
        ("s1", f"{plan.s1:.12g}"),
        ("c_star", f"{c_star:.12g}"),
    ]))
    return 0


def cmd_sweep_nonlinear(cfg: ExperimentConfig, out: Path) -> int:
    grid = Grid(cfg.n)
    sigma_true = build_sigma(cfg.sigma, grid)
    sigma_init = build_sigma(cfg.sigma_init, grid)
    f = build_boundary(cfg.boundary, grid)
    clean = forward_map(sigma_true, f, cfg.p, cfg.grad_floor)
    ref = mesh.h1_norm(clean)
    opts = cfg.inversion_options()
    truth_norm = mesh.l2_norm(sigma_true.field)
    records = []
    for k, level in enumerate(cfg.levels):
        noise = make_noise(grid, level, cfg.seed + k, ref_h1=ref)
        rec, log = gauss_newton_reconstruct(
            sigma_init, f, cfg.p, clean + noise, opts, cfg.grad_floor
        )
        records.append(SweepRecord(
            label=f"noise-{k}",
            eps=level,
            l2_h=mesh.l2_norm(rec.field - sigma_true.field),
            h1_dF=mesh.h1_norm(noise),
            hs1_h=ref,
            rec_err=mesh.l2_norm(rec.field - sigma_true.field) / truth_norm,
            extra=log[-1].misfit,
        ))
    slope, intercept, r2 = fit_exponent(records, "h1_dF", "rec_err")
    _write_text(out, "sweep_nonlinear.csv", sweep_to_csv(records))
    _write_text(out, "summary.txt", _summary([
        ("levels", ",".join(f"{l:.12g}" for l in cfg.levels)),
        ("slope", f"{slope:.12g}"),
        ("intercept", f"{intercept:.12g}"),
        ("r2", f"{r2:.12g}"),
    ]))
    return 0


def cmd_plan(cfg: ExperimentConfig, out: Path) -> int:
    plan = plan_exponents(cfg.theta, cfg.p)
    text = plan_to_text(plan)
    sys.stdout.write(text)
    _write_text(out, "plan.txt", text)
    return 0


_COMMANDS = {
    "forward": cmd_forward,
    "verify": cmd_verify,
    "reconstruct": cmd_reconstruct,
    "sweep-linear": cmd_sweep_linear,
    "sweep-nonlinear": cmd_sweep_nonlinear,
    "plan": cmd_plan,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hip", description="hybrid inverse problem laboratory"
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        return _COMMANDS[args.command](cfg, Path(args.out))
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except GradientFloorViolated as exc:
        sys.stderr.write(f"gradient floor: {exc}\n")
        return 3
    except (SolverConvergenceError, EigenConvergenceError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return 4
    except ReconstructionDivergence as exc:
        sys.stderr.write(f"divergence: {exc}\n")
        return 5


if __name__ == "__main__":
    sys.exit(main())
