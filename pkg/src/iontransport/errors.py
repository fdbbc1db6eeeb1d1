"""Exception hierarchy shared by all modules."""


class IonChainError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(IonChainError, ValueError):
    """Invalid trap, scenario or schedule parameters."""


class NonConvergence(IonChainError, RuntimeError):
    pass


class BranchUnavailable(IonChainError):
    """Requested mode branch is not defined for this configuration."""


class NumericalFailure(IonChainError, RuntimeError):
    pass


class IonCollision(IonChainError, RuntimeError):
    pass


class StepTooLarge(IonChainError, ValueError):
    pass


class EmptyTrace(IonChainError, ValueError):
    pass


class TruncationOverflow(IonChainError, RuntimeError):
    pass


class FitDiverged(IonChainError, RuntimeError):
    pass


class IoFailure(IonChainError, OSError):
    pass
