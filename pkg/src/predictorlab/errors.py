"""Exception hierarchy shared by every predictorlab module."""


class PredictorLabError(Exception):
    """Base class for all library errors."""


class InvalidArgument(PredictorLabError, ValueError):
    pass


class OutOfDomain(InvalidArgument):
    """A query time falls outside the recorded window of a signal or history."""


class ContractionViolated(PredictorLabError, ValueError):
    """The Picard contraction factor ``(nL+1)T`` is not below one."""


class NotHurwitz(PredictorLabError, ValueError):
    pass


class UnknownPlant(PredictorLabError, KeyError):
    pass


class UndefinedFit(PredictorLabError, ValueError):
    pass


class SimulationDiverged(PredictorLabError, RuntimeError):
    """Raised when the closed-loop state leaves the divergence guard.

    ``last_time`` is the last time at which the state was finite and below
    the guard; ``trace`` holds the rows recorded up to that point.
    """

    def __init__(self, last_time, trace=None, message=None):
        self.last_time = float(last_time)
        self.trace = trace
        super().__init__(message or f"closed loop diverged after t={self.last_time:.6g}")
