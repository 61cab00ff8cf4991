"""Exception hierarchy shared by every module of the package."""


class DichoError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(DichoError):
    pass


class SingularMatrix(DichoError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"map A_{index} is not invertible within tolerance")


class IndexOutOfWindow(DichoError):
    def __init__(self, index, window):
        self.index = index
        self.window = window
        super().__init__(f"index {index} outside window [{window.lo}, {window.hi}]")


class WindowMismatch(DichoError):
    pass


class DomainError(DichoError, ValueError):
    pass


class NoGapDetected(DichoError):
    pass


class ZeroNotInWindow(DichoError):
    pass


class F0NotZero(DichoError):
    pass


class GluingNotSolvable(DichoError):
    def __init__(self, residual, mismatch):
        self.residual = residual
        self.mismatch = mismatch
        super().__init__(
            f"cannot glue half-line solutions: least-squares residual {residual:.3e} "
            f"for mismatch of size {mismatch:.3e}"
        )


class EtaNotUnstable(DichoError):
    pass


class NotContraction(DichoError):
    pass


class PreconditionViolation(DichoError):
    pass


class DomainExit(DichoError):
    pass


class MaxIterExceeded(DichoError):
    pass


class VerificationFailed(DichoError):
    pass
