"""Exception hierarchy for the solver pipeline."""


class TCMertonError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(TCMertonError):
    """Invalid market / discount / utility specification, or evaluation
    outside the admissible domain."""


class GridError(TCMertonError):
    """Invalid grid specification."""


class SolverError(TCMertonError):
    """A linear solve inside the PDE time-stepping failed.

    Carries the time index of the offending step in ``time_index``.
    """

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class IntegrityError(TCMertonError):
    """A quantity violated a sign or bound that the theory guarantees.

    Signals a misconfigured utility/grid rather than an ordinary
    numerical failure.
    """


class ConvergenceError(TCMertonError):
    """Fixed-point iteration failed to converge within max_iter.

    The residual history is attached as ``history``.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class WealthRangeError(TCMertonError):
    """Requested wealth level is outside the range covered by the grid."""
