"""hiplab: a numerical laboratory for the hybrid inverse problem
F(sigma) = sigma |grad u|^p on the unit square.

Modules
-------
mesh            grids, fields, spectral Sobolev norms, hipfield i/o
elliptic        flux-form Dirichlet solver for div(sigma grad u)
forward         the forward map and its exact discrete differentials
factorization   transport operator, projections, the second-order factor L
inversion       linearized Tikhonov inversion and Gauss-Newton
stability       exponent calculus and interpolation-estimate sweeps
cli             the ``hip`` command
"""

from .elliptic import (
    Conductivity,
    DirichletSystem,
    assemble,
    solve_dirichlet,
    solve_zero_bc,
)
from .errors import (
    ConfigError,
    CurlResidualError,
    EigenConvergenceError,
    GradientFloorViolated,
    GridMismatchError,
    HipError,
    ReconstructionDivergence,
    SolverConvergenceError,
)
from .factorization import (
    assemble_L,
    factorization_residual,
    harmonic_conjugate,
    l_spectral_bound,
    project_parallel,
    project_perp,
    transport_apply,
    transport_spectral_bound,
    wave_speed,
)
from .forward import (
    LinearizationBundle,
    build_bundle,
    differential,
    forward_map,
    second_differential,
    solve_potential,
    taylor_remainder,
)
from .inversion import (
    InversionOptions,
    SweepRecord,
    apply_dF_adjoint,
    fit_exponent,
    gauss_newton_reconstruct,
    linear_invert,
    make_noise,
)
from .mesh import Grid, ScalarField, VectorField
from .stability import (
    ExponentPlan,
    beta_of,
    linear_stability_sweep,
    plan_exponents,
    validate_plan,
)

__version__ = "0.1.0"
