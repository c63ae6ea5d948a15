"""Exception hierarchy shared by every module of the package."""


class PiezoModalError(Exception):
    """Base class for all errors raised by :mod:`piezomodal`."""


class ConfigError(PiezoModalError, ValueError):
    """Invalid user input: parameters, profiles, grids or configuration keys."""


class NonPositiveParameter(ConfigError):
    pass


class StiffnessBelowCoupling(ConfigError):
    pass


class DimensionMismatch(PiezoModalError, ValueError):
    pass


class QuadratureUnderResolved(ConfigError):
    pass


class NumericalFailure(PiezoModalError, ArithmeticError):
    """A numerical check or linear-algebra kernel failed."""


class SingularMass(NumericalFailure):
    pass


class LinearSolveFailure(NumericalFailure):
    pass


class EigSolveFailure(NumericalFailure):
    pass


class FactorizationFailure(NumericalFailure):
    pass


class ModeCutoffSuspect(NumericalFailure):
    pass


class DegenerateFit(NumericalFailure):
    pass


class OverScaleLimit(NumericalFailure):
    pass
