"""Exception types raised across the package."""


class PAdicError(Exception):
    """Base class for all package errors."""


class PrecisionError(PAdicError):
    """A p-adic scalar is not known to enough digits for the requested test."""


class GeometryError(PAdicError, ValueError):
    """Invalid ball, cover or region (overlaps, wrong prime, bad level)."""


class LevelError(PAdicError, ValueError):
    """Truncation level is too coarse for the requested object."""


class RegionMismatchError(PAdicError, ValueError):
    pass


class NotAnEigenvectorError(PAdicError):
    """A candidate eigenfunction failed the residual test."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class NotEllipticError(PAdicError):
    pass


class EmptyConstrainedSpaceError(PAdicError):
    """The test-function space D_0(U) is trivial at the working level."""


class KernelObstructionError(PAdicError):
    """Singular Poisson system and a right-hand side with a kernel component."""

    def __init__(self, message, kernel_component):
        super().__init__(message)
        self.kernel_component = kernel_component


class NotDiagonalisableError(PAdicError):
    pass


class NotAGeneratorError(PAdicError):
    """Matrix fails the Metzler / row-sum test for a Markov generator."""


class NoInvariantVectorError(PAdicError):
    pass


class ConfigError(PAdicError, ValueError):
    """Schema or semantic violation in a run configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
