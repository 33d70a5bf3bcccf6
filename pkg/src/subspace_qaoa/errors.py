"""Exception hierarchy shared across the package."""


class QaoaReductionError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(QaoaReductionError, ValueError):
    """Shapes, qubit counts or dimensions do not line up."""


class ResourceError(QaoaReductionError):
    """The requested computation exceeds a configured size limit."""


class ConstraintError(QaoaReductionError, ValueError):
    """A constraint specification is infeasible or malformed."""


class NumericalIntegrityError(QaoaReductionError, ArithmeticError):
    """A numerical invariant (norm, orthonormality, Hermiticity) was violated."""
