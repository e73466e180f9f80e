"""Exception hierarchy shared across the package."""


class CalibrationError(Exception):
    """Base class for all errors raised by gtncal."""


class DomainError(CalibrationError, ValueError):
    """A scalar argument is outside the mathematical domain of an operation."""


class ParameterError(CalibrationError, ValueError):
    """A parameter set violates its invariants (e.g. f_c >= f_f)."""


class StabilityError(CalibrationError):
    """An explicit integration step exceeds its stability bound."""


class NumericError(CalibrationError):
    """A computation produced non-finite values or failed numerically."""


class SimulationIncompleteError(CalibrationError):
    """The specimen simulation ended without failure or post-peak softening."""


class CurveFormatError(CalibrationError, ValueError):
    """A force-displacement curve violates its format contract."""


class NoYieldError(CalibrationError):
    """A curve never deviates from its initial linear response."""


class SegmentationError(CalibrationError, ValueError):
    """Curve segmentation bounds are inconsistent (d_Y >= d_f)."""


class AlignmentError(CalibrationError, ValueError):
    """Field masks or feature dimensions do not line up across a dataset."""


class OptimizationError(CalibrationError):
    """Hyperparameter optimization failed on every start."""


class ConvergenceError(CalibrationError):
    """Sampler diagnostics failed the convergence gate."""


class InsufficientDataError(CalibrationError, ValueError):
    """Too few samples or points for a statistically meaningful operation."""


class ArtifactError(CalibrationError):
    """A pipeline artifact is missing or its content hash does not match."""
