"""Exception types raised across the solver stack."""


class MfbeamError(Exception):
    """Base class for all mfbeam errors."""


class DimensionMismatch(MfbeamError):
    """Matrix or vector shapes are incompatible."""


class NotPositiveDefinite(MfbeamError):
    """A weight that must be positive (semi)definite fails the check."""


class AsymmetricWeight(MfbeamError):
    """A symmetric weight matrix has asymmetry beyond the repair tolerance."""


class BadGrid(MfbeamError):
    """Time grid is unusable (nonpositive horizon or too few subintervals)."""


class BlowUp(MfbeamError):
    """An integration produced non-finite values or entries beyond 1e12.

    Carries the grid index at which the escape was detected.
    """

    def __init__(self, message, grid_index=None):
        super().__init__(message)
        self.grid_index = grid_index


class SingularSystem(MfbeamError):
    """The discrete affine system has no usable solution.

    ``condition_estimate`` holds a condition-number estimate when available.
    """

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NoConvergence(MfbeamError):
    """An iterative solver hit its iteration cap.

    The best iterate reached is attached as ``pair`` so callers can inspect
    the diagnostic trajectory anyway.
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class InsufficientAgents(MfbeamError):
    """Fewer than two agents: the exclusive average is undefined."""


class GridMismatch(MfbeamError):
    """Two time-indexed objects do not share the same grid."""


class NonPositiveDenominator(MfbeamError):
    """Price-of-anarchy denominator is not strictly positive."""
