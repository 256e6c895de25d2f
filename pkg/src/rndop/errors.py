"""Exception hierarchy shared across the package."""


class RndopError(Exception):
    """Base class for all package errors."""


class NonFinite(RndopError, ValueError):
    pass


class SingularUpdate(RndopError, ArithmeticError):
    pass


class NotPositiveDefinite(RndopError, ValueError):
    pass


class NonPositiveTrace(RndopError, ValueError):
    pass


class DegenerateGeometry(RndopError, ValueError):
    pass


class NotCentered(RndopError, ValueError):
    pass


class SingularC(RndopError, ValueError):
    pass


class SingularE(RndopError, ValueError):
    pass


class EmptyRegion(RndopError, ValueError):
    pass


class ZeroFeasible(RndopError, ValueError):
    pass


class Infeasible(RndopError):
    """No multistart produced a separation-feasible point."""


class DegenerateInitial(RndopError, ValueError):
    pass


class CapExhausted(RndopError):
    """Redundant-anchor cap reached before enough valid anchors were found.

    The partial run is attached as ``run``.
    """

    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run


class PlacementAborted(Infeasible):
    """Solver infeasibility aborted an rnd/tr placement; the partial run is attached."""

    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run


class NoFeasibleInit(RndopError):
    pass


class TooFewRecords(RndopError, ValueError):
    pass


class InsufficientSweep(RndopError, ValueError):
    pass


class ConfigError(RndopError, ValueError):
    pass
