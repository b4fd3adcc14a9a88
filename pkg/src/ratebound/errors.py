"""Exception hierarchy. Every error raised on purpose by the package derives
from RateboundError so callers (and the CLI) can map them to exit codes."""


class RateboundError(Exception):
    pass


class DomainError(RateboundError, ValueError):
    """A parameter or input lies outside its admissible set."""


class CapabilityError(RateboundError):
    """The requested route or metric is not available for this model."""


class FitError(RateboundError):
    """The optimizer could not bracket a maximum. Carries the probed grid."""

    def __init__(self, msg, grid=None, values=None):
        super().__init__(msg)
        self.grid = grid
        self.values = values


class DivergenceError(RateboundError):
    pass


class QuadratureError(RateboundError):
    """Adaptive quadrature did not converge. `trace` holds the refinement log."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class ExponentialMomentError(RateboundError):
    """The exponential moment condition fails at the smallest probe."""


class StepConstraintError(RateboundError):
    """Chaining step constraint violated; `max_eps` is the largest admissible radius."""

    def __init__(self, msg, max_eps):
        super().__init__(msg)
        self.max_eps = max_eps


class BracketError(RateboundError):
    def __init__(self, msg, bracket=None, values=None):
        super().__init__(msg)
        self.bracket = bracket
        self.values = values


class MinorantError(RateboundError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ConfigError(RateboundError):
    def __init__(self, msg, key=None, line=None):
        where = ""
        if key is not None:
            where = f" [{key}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(msg + where)
        self.key = key
        self.line = line
