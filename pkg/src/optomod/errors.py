"""Exception hierarchy shared across the simulator.

Every error carries the name of the module that raised it and a short
context string naming the equation or stage involved, so the CLI can
report failures without a traceback.
"""


class OptomodError(Exception):
    """Base class; ``module`` and ``context`` are shown by the CLI."""

    module = "optomod"
    exit_code = 4

    def __init__(self, message, context=""):
        super().__init__(message)
        self.context = context

    def describe(self):
        ctx = f" [{self.context}]" if self.context else ""
        return f"{self.module}: {self}{ctx}"


class ConfigError(OptomodError, ValueError):
    module = "config"
    exit_code = 2


class ParameterError(OptomodError, ValueError):
    module = "model-params"
    exit_code = 2


class ResonantDenominatorError(OptomodError, ArithmeticError):
    module = "classical-orbits"


class DivergenceError(OptomodError):
    module = "classical-orbits"
    exit_code = 3


class RealityViolationError(OptomodError):
    module = "classical-orbits"


class IntegrationError(OptomodError):
    module = "floquet-core"

    def __init__(self, message, t_fail=None, context=""):
        super().__init__(message, context)
        self.t_fail = t_fail


class InstabilityError(OptomodError):
    module = "floquet-core"
    exit_code = 3


class NonRealDriftError(OptomodError):
    module = "covariance-time"


class PositivityLossError(OptomodError):
    module = "covariance-time"


class NotConvergedError(OptomodError):
    module = "covariance-time"


class SingularSystemError(OptomodError):
    module = "covariance-spectral"


class QuadratureError(OptomodError):
    module = "covariance-spectral"


class UnphysicalStateError(OptomodError, ValueError):
    module = "gaussian-metrics"

    def __init__(self, message, t=None, context=""):
        super().__init__(message, context)
        self.t = t


class RwaUnstableError(OptomodError):
    module = "rwa-analytics"
    exit_code = 3
