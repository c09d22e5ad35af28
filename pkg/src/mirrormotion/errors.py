"""Exception types shared across the package."""


class SingularityError(ValueError):
    """A frequency-domain quantity was requested at one of its poles."""


class TailAccuracyError(RuntimeError):
    """A spectral integral is not converged at the requested cutoff frequency."""


class GridMismatchError(ValueError):
    """A filter bank was applied to data sampled on a different grid."""


class RiccatiError(RuntimeError):
    """The steady-state Riccati solution does not exist or is not stabilizing."""
