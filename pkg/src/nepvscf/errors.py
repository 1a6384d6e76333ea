"""Exception types shared across the package."""


class NepvError(Exception):
    """Base class for all package-specific errors."""


class SymmetryError(NepvError):
    """Input matrix violates a required symmetry beyond tolerance."""


class DefinitenessError(NepvError):
    """A matrix required to be positive definite is not."""


class OrthonormalityError(NepvError):
    """Columns of a matrix are not orthonormal within tolerance."""


class PositivityError(NepvError):
    """A quantity required to be positive is not (e.g. the psi weight)."""


class DegenerateProblemError(NepvError):
    """The problem data is degenerate (e.g. vanishing coefficient matrix)."""


class RankPreservingError(NepvError):
    """rank(X^T D) < rank(D): the aligned coefficient matrix is undefined here."""


class GapError(NepvError):
    """The eigenvalue gap needed by the local analysis is not positive."""


class MispositionError(NepvError):
    """The solution basis does not span the top-k eigenspace; consider a level shift."""


class SingularScalingError(NepvError):
    """A shifted-scaling denominator lambda_j - lambda_{k+i} + sigma is not positive."""


class CapabilityError(NepvError):
    """The requested computation exceeds what this implementation supports."""
