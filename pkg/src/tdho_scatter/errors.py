"""Exception hierarchy shared by every module of the package."""


class TDHOError(Exception):
    """Base class for all errors raised by tdho_scatter."""


class InvalidModel(TDHOError, ValueError):
    pass


class NonConvergent(TDHOError, RuntimeError):
    pass


class AssumptionViolated(TDHOError, RuntimeError):
    pass


class DegenerateDenominator(TDHOError, ZeroDivisionError):
    pass


class ShapeMismatch(TDHOError, ValueError):
    pass


class ZeroParameter(TDHOError, ValueError):
    pass


class MissingZeta(TDHOError, ValueError):
    pass


class BoundaryMassError(TDHOError, RuntimeError):
    """Field mass leaks to the edge of the grid; periodic wrap-around would corrupt the result."""


class OutsideValidity(TDHOError, ValueError):
    pass


class ZeroZeta(TDHOError, ZeroDivisionError):
    pass


class BlowupDetected(TDHOError, RuntimeError):
    pass


class CFLViolation(TDHOError, ValueError):
    pass


class FitFailed(TDHOError, RuntimeError):
    pass


class InsufficientSamples(FitFailed):
    pass


class QuadratureUnderflow(TDHOError, ValueError):
    pass


class NotSettled(TDHOError, RuntimeError):
    pass


class DomainError(TDHOError, ValueError):
    pass


class SmallnessViolated(TDHOError, ValueError):
    def __init__(self, stage: str, value: float, threshold: float):
        self.stage = stage
        self.value = value
        self.threshold = threshold
        super().__init__(f"stage {stage!r}: size {value:.6g} exceeds threshold {threshold:.6g}")


class MissingWeightedNorms(TDHOError, ValueError):
    pass


class ConfigError(TDHOError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class AliasRiskWarning(UserWarning):
    pass
