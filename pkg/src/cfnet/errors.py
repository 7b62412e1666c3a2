"""Exception types raised across the package."""


class CFNetError(Exception):
    """Base class for all errors raised by cfnet."""


class ShapeMismatch(CFNetError, ValueError):
    pass


class NonSymmetricSpectrum(CFNetError, ValueError):
    pass


class InvalidSigma(CFNetError, ValueError):
    pass


class NonPositiveLambda(CFNetError, ValueError):
    pass


class StaleCache(CFNetError, ValueError):
    pass


class MarginTooLarge(CFNetError, ValueError):
    pass


class TooLarge(CFNetError, ValueError):
    pass


class SingularSystem(CFNetError, ArithmeticError):
    pass


class NonFiniteEvaluation(CFNetError, ArithmeticError):
    pass


class DivergedLoss(CFNetError, ArithmeticError):
    pass


class DegenerateRect(CFNetError, ValueError):
    pass


class UninitializedState(CFNetError, RuntimeError):
    pass


class EmptyInput(CFNetError, ValueError):
    pass


class InvalidRange(CFNetError, ValueError):
    pass


class MissingGroundTruth(CFNetError, FileNotFoundError):
    pass


class FrameCountMismatch(CFNetError, ValueError):
    pass


class UnsupportedFormat(CFNetError, ValueError):
    pass


class CheckpointError(CFNetError, ValueError):
    pass
