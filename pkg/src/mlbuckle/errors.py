"""Exception hierarchy shared by the analysis and optimization modules."""


class MlbuckleError(Exception):
    """Base class for all package errors."""


class NonDivisibleDims(MlbuckleError, ValueError):
    """Grid dimensions cannot be halved the requested number of times."""


class DimensionMismatch(MlbuckleError, ValueError):
    pass


class OutOfRangeDensity(MlbuckleError, ValueError):
    pass


class MissingDisplacement(MlbuckleError, ValueError):
    """Stress stiffness requested without an equilibrium displacement."""


class MaxIterationsExceeded(MlbuckleError, RuntimeError):
    def __init__(self, msg, x=None, report=None):
        super().__init__(msg)
        self.x = x
        self.report = report


class BreakdownIndefinite(MlbuckleError, RuntimeError):
    """CG met a direction of non-positive curvature."""


class BlockRankCollapse(MlbuckleError, RuntimeError):
    """Every search direction of a block solve was deflated."""


class NotConverged(MlbuckleError, RuntimeError):
    def __init__(self, msg, pairs=None):
        super().__init__(msg)
        self.pairs = pairs


class FewerPositiveModes(MlbuckleError, RuntimeError):
    def __init__(self, msg, pairs=None):
        super().__init__(msg)
        self.pairs = pairs


class TooLarge(MlbuckleError, ValueError):
    pass


class ShiftBreakdown(MlbuckleError, RuntimeError):
    """A Ritz value became non-positive during multilevel smoothing."""


class ZeroGEnergy(MlbuckleError, ValueError):
    pass


class AdjointNotConverged(MlbuckleError, RuntimeError):
    pass


class NonPositiveBlf(MlbuckleError, ValueError):
    pass


class SubproblemInfeasible(MlbuckleError, RuntimeError):
    pass


class NotNormalized(MlbuckleError, ValueError):
    pass


class NoLocalizedModes(MlbuckleError):
    pass


class ConfigError(MlbuckleError, ValueError):
    pass


class FormatError(MlbuckleError, ValueError):
    pass
