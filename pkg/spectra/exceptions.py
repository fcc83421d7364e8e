"""Errors raised by the spectrum approximation library."""


class SpectraError(Exception):
    """Base class for every error raised by the library."""


class FilterError(SpectraError):
    """The pair (A, B) does not define an admissible filter bank."""


class NotStable(FilterError):
    pass


class RankDeficientB(FilterError):
    pass


class NotReachable(FilterError):
    pass


class SingularResolvent(SpectraError):
    pass


class GridMismatch(SpectraError):
    pass


class DimensionMismatch(SpectraError):
    pass


class NotScalar(SpectraError):
    pass


class SpectrumError(SpectraError):
    """Samples do not describe a bounded, coercive spectral density."""


class NotHermitian(SpectrumError):
    pass


class NotCoercive(SpectrumError):
    pass


class DomainViolation(SpectraError):
    """A dual variable left the open domain of its functional."""


class RepairFailed(SpectraError):
    pass


class TooFewSamples(SpectraError):
    pass


class InfeasibleCovariance(SpectraError):
    """Sigma is not in P_Gamma; ``certificate`` says why."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class InfeasiblePerturbation(InfeasibleCovariance):
    pass


class NotConverged(SpectraError):
    """A dual solve stopped before reaching the gradient tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ProblemError(SpectraError):
    """A problem file failed validation; ``diagnostics`` are 'field.path: message' lines."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__('; '.join(self.diagnostics))
