"""Exception types shared across the package."""


class LelOscError(Exception):
    """Base class for all package errors."""


class DegenerateLoop(LelOscError):
    pass


class PoleOnAxis(LelOscError):
    pass


class ConvergenceFailure(LelOscError):
    pass


class ImproperSystem(LelOscError):
    pass


class StepTooLarge(LelOscError):
    """Step response blew past the divergence threshold.

    ``partial`` holds the :class:`~lelosc.series.TimeSeries` prefix computed
    before the threshold was crossed.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BracketInvalid(LelOscError):
    pass


class NoFeasibleSync(LelOscError):
    pass


class VoltageCollapse(LelOscError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NumericalDivergence(LelOscError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InfeasibleLoad(LelOscError):
    pass


class FlatSignal(LelOscError):
    """No trustworthy spectral peak; ``estimate`` carries the unreliable result."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class WindowTooShort(LelOscError):
    pass
