"""Exception types raised across the package."""


class AimError(Exception):
    """Base class for every error raised by aimsolve."""


class SeriesMismatch(AimError, ValueError):
    """Two series with different expansion points were combined."""


class SingularCoefficient(AimError, ZeroDivisionError):
    """A denominator vanishes (or depends on E) at the expansion point."""


class NoRoots(AimError):
    """Root search on a polynomial that cannot have isolated roots."""


class BadBracket(AimError, ValueError):
    """Bracket endpoints do not straddle a sign change."""


class OrderExhausted(AimError):
    """No series order left for another derivative."""


class DecoupledSystem(AimError):
    """The off-diagonal coefficients vanish; use an exact solver instead."""


class GammaSingular(AimError, ZeroDivisionError):
    """The diagonal entry used to form the ratio gamma is zero."""


class PoleOnGrid(AimError, ValueError):
    """A coefficient pole lies on (or between points of) the quadrature grid."""

    def __init__(self, x, message=None):
        self.x = float(x)
        super().__init__(message or f"coefficient pole at x = {self.x:.6g} lies on the grid")


class NoConvergenceWarning(UserWarning):
    """Iteration cap reached while some roots were still drifting."""


class ExprError(AimError, ValueError):
    """Base class for model-expression errors; carries a position."""

    def __init__(self, message, pos=None):
        self.pos = pos
        super().__init__(message if pos is None else f"{message} (at offset {pos})")


class LexError(ExprError):
    pass


class ParseError(ExprError):
    pass


class UnboundVariable(ExprError):
    pass


class ModelFileError(AimError, ValueError):
    """A model file is malformed; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
