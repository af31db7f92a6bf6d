"""Exception types raised by the solvers."""


class HabitatOptError(Exception):
    """Base class for all package errors."""


class OddResolution(HabitatOptError, ValueError):
    pass


class InvalidGrid(HabitatOptError, ValueError):
    pass


class NonConvergence(HabitatOptError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message or f"no convergence after {iterations} iterations (residual {residual:.3e})")


class CGFailure(NonConvergence):
    pass


class NotIntermediateHabitat(HabitatOptError, ValueError):
    pass


class BracketFailure(HabitatOptError):
    pass


class DegenerateLevelSet(HabitatOptError):
    pass


class InadmissibleVolume(HabitatOptError, ValueError):
    pass


class MaxIterationsExceeded(HabitatOptError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StallWithoutConvergence(HabitatOptError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RootNotBracketed(HabitatOptError, ValueError):
    pass


class BallDoesNotFit(HabitatOptError, ValueError):
    pass


class NormalizationDrift(HabitatOptError):
    pass


class MultipleCrossings(HabitatOptError):
    pass


class NoCrossing(HabitatOptError):
    pass


class ConfigError(HabitatOptError, ValueError):
    pass
