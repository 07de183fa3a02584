"""Exception types shared across the package."""


class HipError(Exception):
    """Base class for all hiplab errors."""


class GridMismatchError(HipError):
    """Two fields that must live on the same grid do not."""


class GradientFloorViolated(HipError):
    """|grad u| dropped below the certified floor somewhere.

    Every quantity built from a negative power of |grad u| is meaningless
    past this point, so the offending node is reported immediately.
    """

    def __init__(self, node, value, floor):
        self.node = node
        self.value = value
        self.floor = floor
        super().__init__(
            f"|grad u| = {value:.3e} < floor {floor:.3e} at node {node}"
        )


class SolverConvergenceError(HipError):
    """An iterative linear solve failed to reach its residual target."""


class EigenConvergenceError(HipError):
    """Inverse power iteration failed to settle on an eigenvalue."""


class CurlResidualError(HipError):
    """Path integration of a stream function is path dependent beyond
    tolerance, i.e. the input potential is not sigma-harmonic."""


class ReconstructionDivergence(HipError):
    """Gauss-Newton misfit increased for several consecutive damped steps."""


class ConfigError(HipError):
    """Malformed experiment configuration."""
