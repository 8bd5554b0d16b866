"""Exception hierarchy shared by all modules."""


class SuncrossError(Exception):
    """Base class for every error raised by the library."""


class AnalysisError(SuncrossError):
    """An analysis step could not produce a trustworthy result."""


class ConfigError(SuncrossError):
    """Invalid or inconsistent scenario configuration."""


class DimensionMismatch(SuncrossError, ValueError):
    pass


class NotInRangeOfJ(AnalysisError):
    """A sun-star element is not (numerically) in the range of ``j``."""

    def __init__(self, residual, tol):
        super().__init__(f"element is not in jX: residual {residual:.3e} > tol {tol:.3e}")
        self.residual = residual
        self.tol = tol


class NegativeTime(SuncrossError, ValueError):
    pass


class IntegratorFailure(AnalysisError):
    pass


class MaximalIntervalExceeded(AnalysisError):
    """The solution left the configured ceiling before the requested time."""

    def __init__(self, escape_time, ceiling):
        super().__init__(f"solution exceeded {ceiling:g} near t = {escape_time:.6g}")
        self.escape_time = escape_time
        self.ceiling = ceiling


class ConvergenceMargin(AnalysisError):
    pass


class SingularCharacteristicMatrix(AnalysisError):
    pass


class NonSemisimple(AnalysisError):
    pass


class MaxCountExceeded(AnalysisError):
    pass


class ContourThroughSpectrum(AnalysisError):
    pass


class SpectralGapViolation(AnalysisError):
    pass


class FitFailure(AnalysisError):
    pass


class BiorthogonalityFailure(AnalysisError):
    pass


class EquilibriumViolation(AnalysisError):
    pass


class EtaOutOfRange(AnalysisError):
    pass


class TruncationTooCoarse(AnalysisError):
    pass


class ContractionFailure(AnalysisError):
    pass


class NotConverged(AnalysisError):
    pass


class LeftDeltaBall(AnalysisError):
    """The trajectory left the ball on which the cut-off is inactive."""

    def __init__(self, time):
        super().__init__(f"trajectory left the delta-ball at t = {time:.6g}")
        self.time = time


class SuiteFailure(SuncrossError):
    def __init__(self, failed):
        super().__init__("failed checks: " + ", ".join(failed))
        self.failed = list(failed)
