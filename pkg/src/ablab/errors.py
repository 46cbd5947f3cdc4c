"""Exception hierarchy shared by all ablab modules."""


class AblabError(Exception):
    """Base class for every error raised by the package."""


# numberfield
class NoRootInInterval(AblabError):
    pass


class MultipleRootsInInterval(AblabError):
    pass


class ReduciblePolynomial(AblabError):
    pass


class ConvergenceFailure(AblabError):
    pass


class DivisionByZero(AblabError, ZeroDivisionError):
    pass


# cocycle
class IdentityMismatch(AblabError):
    pass


class EnergyOutOfRange(AblabError, ValueError):
    pass


class LengthCapExceeded(AblabError, ValueError):
    pass


class NormBoundViolated(AblabError):
    pass


class HypothesisFailed(AblabError):
    """An arithmetic precondition on the coupling does not hold."""


# transferop
class QuadratureUnderResolved(AblabError):
    pass


class TruncationLeak(AblabError):
    pass


class PowerIterationStall(AblabError):
    pass


# spectrum
class SturmBreakdown(AblabError):
    pass


class SupportTruncated(AblabError):
    pass


class InsufficientResolution(AblabError):
    pass


# measures
class NonConvergence(AblabError):
    pass


class InsufficientCutoff(AblabError):
    pass


# cli / cache
class ConfigInvalid(AblabError):
    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = dict(fields or {})

    def __str__(self):
        msg = super().__str__()
        if self.fields:
            details = "; ".join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
            return f"{msg} ({details})"
        return msg


class StageError(AblabError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class CacheCorrupt(AblabError):
    pass
