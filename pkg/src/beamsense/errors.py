"""Exception types shared across the package."""


class BeamSenseError(Exception):
    """Base class for all beamsense errors."""


class GeometryError(BeamSenseError, ValueError):
    """Invalid beam or detector geometry (non-positive waist, half_width <= gap/2, ...)."""


class TruncationError(BeamSenseError, ValueError):
    """A mode index beyond the configured truncation n_max was requested."""


class SmallSignalError(BeamSenseError, ValueError):
    """Modulation outside the linearized small-signal window (|d|/w0 or |p| w0/2 >= 0.1)."""


class UsageError(BeamSenseError, ValueError):
    """API misuse: mismatched grids, unnormalized shapes, violated device assumptions."""


class NumericError(BeamSenseError, ArithmeticError):
    """Numerical failure, e.g. covariance factorization on a non-PSD matrix."""
