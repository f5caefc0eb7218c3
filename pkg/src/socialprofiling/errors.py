"""Exception types raised across the package.

Three families map onto the CLI exit codes: configuration problems,
solver failures and input/output problems.
"""


class ProfilingError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ProfilingError, ValueError):
    """A scenario or market configuration is malformed."""


class SolverError(ProfilingError):
    """A numerical routine could not produce a trustworthy answer."""


class InputError(ProfilingError):
    """An input file could not be read or parsed."""


# distribution problems
class DegenerateDistribution(SolverError, ValueError):
    pass


class InsufficientData(SolverError, ValueError):
    pass


class NonFiniteLikelihood(SolverError):
    pass


class OutOfSupport(ProfilingError, ValueError):
    pass


class UnsupportedDistribution(ProfilingError, ValueError):
    pass


# equilibrium problems
class ZeroAccuracy(SolverError, ValueError):
    """Profiling accuracy is zero; use the no-profiling benchmark instead."""


class PerfectAccuracy(SolverError, ValueError):
    """Profiling accuracy is one; use the perfect-profiling benchmark instead."""


class NoInteriorPrice(SolverError):
    def __init__(self, message, v_check=None):
        super().__init__(message)
        self.v_check = v_check


class NoEquilibriumFound(SolverError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class TrivialRegime(SolverError):
    pass


class AboveThreshold(SolverError, ValueError):
    pass


class MultipleFixedPoints(SolverError):
    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class NonConvergence(SolverError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class PriceExceedsThreshold(SolverError):
    pass


class LimitsDisagree(SolverError):
    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


# graph input problems
class ParseError(InputError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyGraph(InputError):
    pass
