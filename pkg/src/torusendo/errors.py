"""Exception hierarchy shared by all torusendo modules."""


class TorusEndoError(Exception):
    """Base class for every error raised by this package."""


class ResidualTooLarge(TorusEndoError):
    """Homology extraction found a non-integer column (evaluator is not equivariant)."""

    def __init__(self, residual):
        super().__init__(f"linear-part rounding residual {residual:.3e} exceeds 1e-6")
        self.residual = residual


class BranchDivergence(TorusEndoError):
    """Newton iteration for an inverse branch did not converge."""


class NoIntegerEigenvalues(TorusEndoError):
    pass


class AreaTooSmall(TorusEndoError):
    """Blichfeldt precondition ``area(B) > k`` fails."""


class PreconditionViolated(TorusEndoError):
    pass


class NotExpanding(TorusEndoError):
    """The linear part has an eigenvalue of modulus <= 1."""


class EigenvalueTieError(TorusEndoError):
    pass


class NotFoundWithin(TorusEndoError):
    def __init__(self, n_max, what="witness"):
        super().__init__(f"no {what} found within n <= {n_max}")
        self.n_max = n_max


class NoFiniteN(TorusEndoError):
    pass


class CellBlowup(TorusEndoError):
    """Outer cover exceeded its cell budget."""


class LiftOverflow(TorusEndoError):
    """Integer lift translation left the int64 range."""


class ExclusionFailed(TorusEndoError):
    pass


class ParseError(TorusEndoError):
    def __init__(self, msg, line=0, column=0):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class ValidationError(TorusEndoError):
    pass


class UnknownName(TorusEndoError):
    pass
