"""Exception and warning types shared across the package."""


class NonSquareError(ValueError):
    """Matrix must be square for this operation."""


class NotHermitianError(ValueError):
    """Asymmetry of the input exceeds the Hermitian tolerance."""


class NotPSDError(ValueError):
    """Matrix has an eigenvalue too negative to treat as PSD."""


class RankDeficientError(ValueError):
    """Numerical column rank is below the requested rank."""


class DimensionMismatchError(ValueError):
    """Operand shapes are inconsistent."""


class QuadratureUnstableError(RuntimeError):
    """Numerical quadrature produced a non-Hermitian correlation matrix."""


class EmptySampleSetError(ValueError):
    """Kernel training requires at least one channel sample."""


class DegenerateGramError(RuntimeError):
    """A Gram-plus-noise matrix in a likelihood evaluation is singular."""


class TooManyChainsError(ValueError):
    """More RF chains requested than receive eigen-directions available."""


class SingularGramError(RuntimeError):
    """Analog combiner Gram matrix is not invertible."""


class SingularDigitalError(RuntimeError):
    """Digital combiner is too ill-conditioned to invert."""


class ZeroCorrelationWarning(RuntimeWarning):
    """Precoder update hit an all-zero correlation vector; fell back to e1."""


class SingularInnovationError(RuntimeError):
    """The innovation matrix X^H Sigma X + Xi is singular."""


class SingularNoiseError(RuntimeError):
    """Noise covariance is singular; mutual information is undefined."""


class UnderdeterminedError(ValueError):
    """LS estimation needs at least as many observations as unknowns."""


class ConfigParseError(ValueError):
    """Scenario configuration file is malformed."""


class ConfigValidationError(ValueError):
    """Scenario configuration contains an unknown or invalid key."""
